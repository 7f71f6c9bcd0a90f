#include "dpm/learning.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "dpm/calculus.hpp"
#include "parallel.hpp"

namespace dpm {

namespace {

// Accumulates fill(i, acc) over all points into a rows x cols matrix. Each
// block of kReductionBlock points owns a partial sum; partials are added in
// block order.
template <class Fill>
Matrix reduce_points(std::size_t n, Eigen::Index rows, Eigen::Index cols, unsigned threads, Fill&& fill) {
  const std::size_t blocks = detail::block_count(n);
  std::vector<Matrix> partial(blocks);
  detail::parallel_for(blocks, threads, [&](std::size_t b) {
    Matrix acc = Matrix::Zero(rows, cols);
    const std::size_t end = std::min(n, (b + 1) * detail::kReductionBlock);
    for (std::size_t i = b * detail::kReductionBlock; i < end; ++i) fill(i, acc);
    partial[b] = std::move(acc);
  });
  Matrix total = Matrix::Zero(rows, cols);
  for (const auto& p : partial) total += p;
  return total;
}

void check_batch(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states) {
  if (states.size() != data.n()) throw Error(ErrorCode::InvalidArgument, "need one latent state per data point");
  if (data.n() > 0 && data.d() != bank.num_dims())
    throw Error(ErrorCode::Domain, "dataset dimension does not match bank");
  if (data.kind != data_kind_for(bank.kind))
    throw Error(ErrorCode::Domain, std::string("dataset kind does not match ") + to_string(bank.kind) + " bank");
}

// Adds r_nk(d) * value(x(d)) to rows [0, K) and r_nk(d) to rows [K, 2K).
template <class Value>
void accumulate_weighted(const ExpertBank& bank, const LatentState& h, std::span<const double> x, Matrix& acc,
                         Value&& value) {
  const auto active = h.indices();
  if (active.empty()) throw Error(ErrorCode::EmptyLatentState, "empty latent state");
  const Eigen::Index num_experts = bank.mu.rows();
  for (Eigen::Index d = 0; d < bank.mu.cols(); ++d) {
    double total_e = 0.0;
    for (auto k : active) total_e += bank.expertise(k, d);
    for (auto k : active) {
      const double r = bank.expertise(k, d) / total_e;
      const auto row = static_cast<Eigen::Index>(k);
      acc(row, d) += r * value(row, d, x[d]);
      acc(num_experts + row, d) += r;
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations == 0) throw Error(ErrorCode::InvalidArgument, "iterations must be positive");
  if (!(c > 1.0)) throw Error(ErrorCode::InvalidArgument, "expertise factor C must exceed 1");
  if (eps && !(*eps >= 0.0)) throw Error(ErrorCode::InvalidArgument, "shrinkage eps must be non-negative");
  if (dead_zone && !(*dead_zone >= 0.0)) throw Error(ErrorCode::InvalidArgument, "dead zone must be non-negative");
  if (!(init_noise >= 0.0)) throw Error(ErrorCode::InvalidArgument, "init noise must be non-negative");
  if (!(clamps.mu_lo > 0.0 && clamps.mu_lo < 0.5 && clamps.var_lo > 0.0 && clamps.e_min > 0.0 &&
        clamps.e_min <= 1.0 && clamps.e_max >= 1.0))
    throw Error(ErrorCode::InvalidArgument, "invalid clamps");
}

ShrinkageTargets shrinkage_targets(const Dataset& data, const Clamps& clamps) {
  if (data.n() == 0) throw Error(ErrorCode::InvalidArgument, "empty dataset");
  ShrinkageTargets t;
  t.mu0 = data.data.colwise().mean().transpose();
  const Matrix centered = data.data.rowwise() - t.mu0.transpose();
  t.v0 = (centered.array().square().colwise().sum() / static_cast<double>(data.n())).transpose();
  t.v0 = t.v0.cwiseMax(clamps.var_lo);
  return t;
}

ExpertBank init_bank(const Dataset& data, ObservationModel kind, std::size_t num_experts, const TrainConfig& cfg) {
  if (num_experts == 0) throw Error(ErrorCode::InvalidArgument, "need at least one expert");
  if (data.n() == 0) throw Error(ErrorCode::InvalidArgument, "empty dataset");
  if (data.kind != data_kind_for(kind))
    throw Error(ErrorCode::Domain, std::string("dataset kind does not match ") + to_string(kind) + " model");
  const auto targets = shrinkage_targets(data, cfg.clamps);

  ExpertBank bank = ExpertBank::uniform(kind, num_experts, data.d());
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> noise(-cfg.init_noise, cfg.init_noise);
  for (Eigen::Index k = 0; k < bank.mu.rows(); ++k) {
    for (Eigen::Index d = 0; d < bank.mu.cols(); ++d) {
      double m = targets.mu0[d] + noise(rng);
      if (kind == ObservationModel::Bernoulli) m = std::clamp(m, cfg.clamps.mu_lo, 1.0 - cfg.clamps.mu_lo);
      bank.mu(k, d) = m;
    }
  }
  if (bank.gaussian()) bank.var = targets.v0.transpose().replicate(bank.mu.rows(), 1);
  if (cfg.init_expertise_jitter > 0.0) {
    std::uniform_real_distribution<double> jitter(-cfg.init_expertise_jitter, cfg.init_expertise_jitter);
    for (Eigen::Index i = 0; i < bank.expertise.size(); ++i)
      bank.expertise.data()[i] = std::clamp(std::exp2(jitter(rng)), cfg.clamps.e_min, cfg.clamps.e_max);
  }
  return bank;
}

Matrix batch_expertise_gradient(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                                unsigned threads, double var_lo) {
  check_batch(bank, data, states);
  return reduce_points(data.n(), bank.mu.rows(), bank.mu.cols(), threads, [&](std::size_t i, Matrix& acc) {
    accumulate_dll_de(bank, states[i], row_span(data.data, static_cast<Eigen::Index>(i)), acc, var_lo);
  });
}

Matrix update_expertise(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                        const TrainConfig& cfg) {
  const Matrix grad = batch_expertise_gradient(bank, data, states, cfg.threads, cfg.clamps.var_lo);
  const double tau = cfg.dead_zone_for(data.n());
  Matrix e = bank.expertise;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double g = grad.data()[i];
    double& v = e.data()[i];
    if (g > tau)
      v = std::min(v * cfg.c, cfg.clamps.e_max);
    else if (g < -tau)
      v = std::max(v / cfg.c, cfg.clamps.e_min);
  }
  return e;
}

Matrix update_means(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                    const ShrinkageTargets& targets, double eps, const Clamps& clamps, unsigned threads) {
  check_batch(bank, data, states);
  const Eigen::Index num_experts = bank.mu.rows();
  const Matrix sums = reduce_points(data.n(), 2 * num_experts, bank.mu.cols(), threads, [&](std::size_t i, Matrix& acc) {
    accumulate_weighted(bank, states[i], row_span(data.data, static_cast<Eigen::Index>(i)), acc,
                        [](Eigen::Index, Eigen::Index, double x) { return x; });
  });
  Matrix mu(num_experts, bank.mu.cols());
  for (Eigen::Index k = 0; k < num_experts; ++k) {
    for (Eigen::Index d = 0; d < mu.cols(); ++d) {
      const double weight = sums(num_experts + k, d) + eps;
      double m = weight > 0.0 ? (sums(k, d) + eps * targets.mu0[d]) / weight : targets.mu0[d];
      if (bank.kind == ObservationModel::Bernoulli) m = std::clamp(m, clamps.mu_lo, 1.0 - clamps.mu_lo);
      mu(k, d) = m;
    }
  }
  return mu;
}

Matrix update_variances(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                        const Matrix& new_mu, const ShrinkageTargets& targets, double eps, const Clamps& clamps,
                        unsigned threads) {
  if (!bank.gaussian()) throw Error(ErrorCode::InvalidArgument, "variance update requires a Gaussian bank");
  check_batch(bank, data, states);
  const Eigen::Index num_experts = bank.mu.rows();
  const Matrix sums = reduce_points(data.n(), 2 * num_experts, bank.mu.cols(), threads, [&](std::size_t i, Matrix& acc) {
    accumulate_weighted(bank, states[i], row_span(data.data, static_cast<Eigen::Index>(i)), acc,
                        [&](Eigen::Index k, Eigen::Index d, double x) {
                          const double dev = x - new_mu(k, d);
                          return dev * dev;
                        });
  });
  Matrix var(num_experts, bank.mu.cols());
  for (Eigen::Index k = 0; k < num_experts; ++k) {
    for (Eigen::Index d = 0; d < var.cols(); ++d) {
      const double weight = sums(num_experts + k, d) + eps;
      const double v = weight > 0.0 ? (sums(k, d) + eps * targets.v0[d]) / weight : targets.v0[d];
      var(k, d) = std::max(v, clamps.var_lo);
    }
  }
  return var;
}

Matrix hard_ml_update(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                      const ShrinkageTargets& targets, const Clamps& clamps) {
  check_batch(bank, data, states);
  const Eigen::Index num_experts = bank.mu.rows();
  Matrix sum = Matrix::Zero(num_experts, bank.mu.cols());
  Matrix count = Matrix::Zero(num_experts, bank.mu.cols());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto comp = compose_hard(bank, states[i]);
    for (Eigen::Index d = 0; d < bank.mu.cols(); ++d) {
      const int k = comp.support[d];
      sum(k, d) += data.data(static_cast<Eigen::Index>(i), d);
      count(k, d) += 1.0;
    }
  }
  Matrix mu(num_experts, bank.mu.cols());
  for (Eigen::Index k = 0; k < num_experts; ++k) {
    for (Eigen::Index d = 0; d < mu.cols(); ++d) {
      double m = count(k, d) > 0.0 ? sum(k, d) / count(k, d) : targets.mu0[d];
      if (bank.kind == ObservationModel::Bernoulli) m = std::clamp(m, clamps.mu_lo, 1.0 - clamps.mu_lo);
      mu(k, d) = m;
    }
  }
  return mu;
}

std::vector<LatentState> train_step(ExpertBank& bank, const Dataset& data, const ShrinkageTargets& targets,
                                    const TrainConfig& cfg) {
  InferenceConfig inference = cfg.inference;
  inference.var_lo = cfg.clamps.var_lo;
  auto results = infer_batch(bank, data, inference, cfg.threads);
  std::vector<LatentState> states;
  states.reserve(results.size());
  for (auto& r : results) states.push_back(std::move(r.h));

  // Expertise first, then opinions under the new responsibilities.
  bank.expertise = update_expertise(bank, data, states, cfg);
  const double eps = cfg.eps_for(data.n());
  Matrix mu = update_means(bank, data, states, targets, eps, cfg.clamps, cfg.threads);
  if (bank.gaussian()) bank.var = update_variances(bank, data, states, mu, targets, eps, cfg.clamps, cfg.threads);
  bank.mu = std::move(mu);
  return states;
}

FitResult fit(const Dataset& data, ObservationModel kind, std::size_t num_experts, const TrainConfig& cfg,
              const IterationCallback& on_iteration) {
  cfg.validate();
  data.validate();
  FitResult out;
  out.bank = init_bank(data, kind, num_experts, cfg);
  const auto targets = shrinkage_targets(data, cfg.clamps);

  InferenceConfig evaluation = cfg.evaluation;
  evaluation.var_lo = cfg.clamps.var_lo;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const auto states = train_step(out.bank, data, targets, cfg);

    std::vector<double> ll(data.n());
    detail::parallel_for(data.n(), cfg.threads, [&](std::size_t i) {
      const auto x = row_span(data.data, static_cast<Eigen::Index>(i));
      ll[i] = log_likelihood(compose_soft(out.bank, states[i], cfg.clamps.var_lo), x, kind);
    });
    double total_ll = 0.0;
    for (double v : ll) total_ll += v;

    const auto eval = evaluate(out.bank, data, evaluation, cfg.threads);
    IterationReport rep{it, total_ll / static_cast<double>(data.n()), eval.recon_error, eval.avg_active};
    out.report.iterations.push_back(rep);
    if (on_iteration) on_iteration(rep);
  }
  return out;
}

Evaluation evaluate(const ExpertBank& bank, const Dataset& data, const InferenceConfig& cfg, unsigned threads) {
  Evaluation out;
  if (data.n() == 0) return out;
  const auto results = infer_batch(bank, data, cfg, threads);
  std::vector<double> err(data.n());
  detail::parallel_for(data.n(), threads, [&](std::size_t i) {
    const auto comp = compose(bank, results[i].h, cfg.composition, cfg.var_lo);
    double e = 0.0;
    for (Eigen::Index d = 0; d < comp.mu.size(); ++d) {
      const double x = data.data(static_cast<Eigen::Index>(i), d);
      if (data.kind == DataKind::Binary) {
        e += ((comp.mu[d] >= 0.5 ? 1.0 : 0.0) != x) ? 1.0 : 0.0;
      } else {
        const double diff = comp.mu[d] - x;
        e += diff * diff;
      }
    }
    err[i] = e;
  });
  double total_err = 0.0;
  double total_ll = 0.0;
  double total_active = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    total_err += err[i];
    total_ll += results[i].final_ll;
    total_active += static_cast<double>(results[i].h.count());
  }
  const auto n = static_cast<double>(data.n());
  out.recon_error = total_err / (n * static_cast<double>(data.d()));
  out.mean_ll = total_ll / n;
  out.avg_active = total_active / n;
  return out;
}

}  // namespace dpm
