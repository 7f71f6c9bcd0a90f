#include "dpm/core.hpp"

#include <algorithm>
#include <sstream>

namespace dpm {

namespace {

void require_active(const ExpertBank& bank, const LatentState& h) {
  if (h.size() != bank.num_experts()) {
    std::ostringstream msg;
    msg << "latent state has " << h.size() << " entries, bank has " << bank.num_experts() << " experts";
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  if (h.empty()) throw Error(ErrorCode::EmptyLatentState, "empty latent state");
}

}  // namespace

ExpertBank ExpertBank::uniform(ObservationModel kind, std::size_t num_experts, std::size_t num_dims) {
  if (num_experts == 0 || num_dims == 0) throw Error(ErrorCode::InvalidArgument, "bank needs K >= 1 and D >= 1");
  const auto k = static_cast<Eigen::Index>(num_experts);
  const auto d = static_cast<Eigen::Index>(num_dims);
  ExpertBank bank;
  bank.kind = kind;
  bank.mu = Matrix::Constant(k, d, kind == ObservationModel::Bernoulli ? 0.5 : 0.0);
  if (kind == ObservationModel::Gaussian) bank.var = Matrix::Ones(k, d);
  bank.expertise = Matrix::Ones(k, d);
  return bank;
}

void ExpertBank::validate(const Clamps& clamps) const {
  if (mu.size() == 0) throw Error(ErrorCode::Domain, "bank is empty");
  if (expertise.rows() != mu.rows() || expertise.cols() != mu.cols())
    throw Error(ErrorCode::Domain, "expertise shape differs from opinion shape");
  if (gaussian() && (var.rows() != mu.rows() || var.cols() != mu.cols()))
    throw Error(ErrorCode::Domain, "variance shape differs from opinion shape");
  if (!gaussian() && var.size() != 0) throw Error(ErrorCode::Domain, "Bernoulli bank carries variances");

  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double m = mu.data()[i];
    const double e = expertise.data()[i];
    if (!std::isfinite(m)) throw Error(ErrorCode::Domain, "non-finite opinion");
    if (!gaussian() && (m < clamps.mu_lo || m > 1.0 - clamps.mu_lo))
      throw Error(ErrorCode::Domain, "Bernoulli opinion outside clamp range");
    if (!(e >= clamps.e_min && e <= clamps.e_max)) throw Error(ErrorCode::Domain, "expertise outside clamp range");
    if (gaussian() && !(var.data()[i] >= clamps.var_lo && std::isfinite(var.data()[i])))
      throw Error(ErrorCode::Domain, "variance below floor");
  }
}

LatentState::LatentState(std::initializer_list<int> bits) {
  active_.reserve(bits.size());
  for (int b : bits) active_.push_back(b != 0 ? 1 : 0);
}

LatentState LatentState::single(std::size_t num_experts, std::size_t k) {
  LatentState h(num_experts);
  h.set(k);
  return h;
}

std::size_t LatentState::count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> LatentState::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < active_.size(); ++k)
    if (active_[k]) out.push_back(k);
  return out;
}

ResponsibilityMatrix responsibilities(const ExpertBank& bank, const LatentState& h) {
  require_active(bank, h);
  const auto active = h.indices();
  ResponsibilityMatrix out{Matrix::Zero(bank.mu.rows(), bank.mu.cols())};
  for (Eigen::Index d = 0; d < bank.mu.cols(); ++d) {
    double total = 0.0;
    for (auto k : active) total += bank.expertise(k, d);
    for (auto k : active) out.r(k, d) = bank.expertise(k, d) / total;
  }
  return out;
}

ComposedDistribution compose_hard(const ExpertBank& bank, const LatentState& h) {
  require_active(bank, h);
  const auto active = h.indices();
  const Eigen::Index dims = bank.mu.cols();
  ComposedDistribution out;
  out.mu.resize(dims);
  if (bank.gaussian()) out.var.resize(dims);
  out.support.resize(static_cast<std::size_t>(dims));
  for (Eigen::Index d = 0; d < dims; ++d) {
    std::size_t best = active.front();
    for (auto k : active)
      if (bank.expertise(k, d) > bank.expertise(best, d)) best = k;
    out.support[d] = static_cast<int>(best);
    out.mu[d] = bank.mu(best, d);
    if (bank.gaussian()) out.var[d] = bank.var(best, d);
  }
  return out;
}

ComposedDistribution compose_soft(const ExpertBank& bank, const LatentState& h, double var_lo) {
  const auto r = responsibilities(bank, h);
  const auto active = h.indices();
  const Eigen::Index dims = bank.mu.cols();
  ComposedDistribution out;
  out.mu.resize(dims);
  if (bank.gaussian()) out.var.resize(dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (auto k : active) mean += r.r(k, d) * bank.mu(k, d);
    out.mu[d] = mean;
    if (bank.gaussian()) {
      // Within-component plus between-component spread.
      double v = 0.0;
      for (auto k : active) {
        const double dev = bank.mu(k, d) - mean;
        v += r.r(k, d) * (bank.var(k, d) + dev * dev);
      }
      out.var[d] = std::max(v, var_lo);
    }
  }
  return out;
}

ComposedDistribution compose(const ExpertBank& bank, const LatentState& h, Composition rule, double var_lo) {
  return rule == Composition::Hard ? compose_hard(bank, h) : compose_soft(bank, h, var_lo);
}

void check_observation(std::span<const double> x, std::size_t num_dims, ObservationModel kind) {
  if (x.size() != num_dims) {
    std::ostringstream msg;
    msg << "observation has " << x.size() << " dimensions, expected " << num_dims;
    throw Error(ErrorCode::Domain, msg.str());
  }
  for (double v : x) {
    if (kind == ObservationModel::Bernoulli && v != 0.0 && v != 1.0)
      throw Error(ErrorCode::Domain, "binary observation contains a value other than 0 or 1");
    if (!std::isfinite(v)) throw Error(ErrorCode::Domain, "observation contains a non-finite value");
  }
}

double log_likelihood(const ComposedDistribution& comp, std::span<const double> x, ObservationModel kind) {
  check_observation(x, static_cast<std::size_t>(comp.mu.size()), kind);
  if (kind == ObservationModel::Gaussian && comp.var.size() != comp.mu.size())
    throw Error(ErrorCode::InvalidArgument, "Gaussian likelihood needs composed variances");
  double total = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    total += log_density(kind, x[d], comp.mu[i], kind == ObservationModel::Gaussian ? comp.var[i] : 0.0);
  }
  return total;
}

ComposedDistribution compose_fixed_partition(ObservationModel kind, std::span<const SubsetModel> models,
                                             std::size_t num_dims, const LatentState& h) {
  if (h.size() != models.size()) throw Error(ErrorCode::InvalidArgument, "latent state must have one bit per block");
  std::vector<int> owner(num_dims, -1);
  for (std::size_t l = 0; l < models.size(); ++l) {
    const auto& m = models[l];
    const auto width = static_cast<Eigen::Index>(m.dims.size());
    if (m.mu.cols() != width || m.mu.rows() < 1 || m.mu.rows() > 2)
      throw Error(ErrorCode::InvalidArgument, "block parameters must have one or two rows matching its dimensions");
    if (kind == ObservationModel::Gaussian && (m.var.rows() != m.mu.rows() || m.var.cols() != width))
      throw Error(ErrorCode::InvalidArgument, "Gaussian block needs variances shaped like its means");
    for (auto d : m.dims) {
      if (d >= num_dims) throw Error(ErrorCode::InvalidArgument, "partition references a dimension out of range");
      if (owner[d] != -1) throw Error(ErrorCode::InvalidArgument, "partition blocks overlap");
      owner[d] = static_cast<int>(l);
    }
  }
  if (std::find(owner.begin(), owner.end(), -1) != owner.end())
    throw Error(ErrorCode::InvalidArgument, "partition does not cover every dimension");

  ComposedDistribution out;
  out.mu.resize(static_cast<Eigen::Index>(num_dims));
  if (kind == ObservationModel::Gaussian) out.var.resize(static_cast<Eigen::Index>(num_dims));
  out.support = owner;
  for (std::size_t l = 0; l < models.size(); ++l) {
    const auto& m = models[l];
    const Eigen::Index row = (m.mu.rows() == 2 && h[l]) ? 1 : 0;
    for (std::size_t j = 0; j < m.dims.size(); ++j) {
      const auto d = static_cast<Eigen::Index>(m.dims[j]);
      out.mu[d] = m.mu(row, static_cast<Eigen::Index>(j));
      if (kind == ObservationModel::Gaussian) out.var[d] = m.var(row, static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

}  // namespace dpm
