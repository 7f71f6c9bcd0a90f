#include "dpm/calculus.hpp"

namespace dpm {

namespace {

void nan_guard(double a, double b, double c) {
  if (std::isnan(a) || std::isnan(b) || std::isnan(c)) throw Error(ErrorCode::Domain, "NaN input to derivative");
}

}  // namespace

double dll_dmu(double comp_mu, double x, ObservationModel kind, double comp_var) {
  nan_guard(comp_mu, x, comp_var);
  if (kind == ObservationModel::Bernoulli) return (x - comp_mu) / (comp_mu * (1.0 - comp_mu));
  return (x - comp_mu) / comp_var;
}

double dll_dvar(double comp_mu, double comp_var, double x) {
  nan_guard(comp_mu, comp_var, x);
  const double diff = x - comp_mu;
  return (diff * diff - comp_var) / (2.0 * comp_var * comp_var);
}

double dll_dmu_k(double r_k, double comp_mu, double x, ObservationModel kind, double comp_var) {
  return r_k * dll_dmu(comp_mu, x, kind, comp_var);
}

double dvar_dmu_k(double r_k, double mu_k, double comp_mu) {
  nan_guard(r_k, mu_k, comp_mu);
  return 2.0 * r_k * (mu_k - comp_mu);
}

double dll_dvar_k(double r_k, double comp_mu, double comp_var, double x) {
  return r_k * dll_dvar(comp_mu, comp_var, x);
}

double d2ll_dmu_k2(double r_k, double comp_mu, double x) {
  nan_guard(r_k, comp_mu, x);
  const double diff = x - comp_mu;
  const double denom = comp_mu * (1.0 - comp_mu);
  return -(r_k * r_k) * (diff * diff) / (denom * denom);
}

void accumulate_dll_de(const ExpertBank& bank, const LatentState& h, std::span<const double> x, Matrix& grad,
                       double var_lo) {
  const auto comp = compose_soft(bank, h, var_lo);
  check_observation(x, bank.num_dims(), bank.kind);
  const auto active = h.indices();
  const bool gaussian = bank.gaussian();
  for (Eigen::Index d = 0; d < bank.mu.cols(); ++d) {
    double total_e = 0.0;
    for (auto k : active) total_e += bank.expertise(k, d);
    const double mean = comp.mu[d];
    const double v = gaussian ? comp.var[d] : 1.0;
    const double g_mu = dll_dmu(mean, x[d], bank.kind, v);
    const double g_var = gaussian ? dll_dvar(mean, v, x[d]) : 0.0;
    for (auto k : active) {
      const double dev = bank.mu(k, d) - mean;
      double g = g_mu * dev / total_e;
      if (gaussian) g += g_var * (bank.var(k, d) - v + dev * dev) / total_e;
      grad(k, d) += g;
    }
  }
}

Matrix dll_de(const ExpertBank& bank, const LatentState& h, std::span<const double> x, double var_lo) {
  Matrix grad = Matrix::Zero(bank.mu.rows(), bank.mu.cols());
  accumulate_dll_de(bank, h, x, grad, var_lo);
  return grad;
}

double finite_diff_loglik(const ExpertBank& bank, const LatentState& h, std::span<const double> x,
                          ParameterSelector which, double step, const Clamps& clamps) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  if (which.expert >= bank.num_experts() || which.dim >= bank.num_dims())
    throw Error(ErrorCode::InvalidArgument, "parameter index out of range");
  const auto k = static_cast<Eigen::Index>(which.expert);
  const auto d = static_cast<Eigen::Index>(which.dim);

  Matrix* target = nullptr;
  ExpertBank plus = bank;
  ExpertBank minus = bank;
  double lo = 0.0;
  double hi = 0.0;
  switch (which.field) {
    case ParameterSelector::Field::Mu:
      target = &plus.mu;
      lo = bank.gaussian() ? -HUGE_VAL : clamps.mu_lo;
      hi = bank.gaussian() ? HUGE_VAL : 1.0 - clamps.mu_lo;
      break;
    case ParameterSelector::Field::Var:
      if (!bank.gaussian()) throw Error(ErrorCode::InvalidArgument, "Bernoulli bank has no variances");
      target = &plus.var;
      lo = clamps.var_lo;
      hi = HUGE_VAL;
      break;
    case ParameterSelector::Field::Expertise:
      target = &plus.expertise;
      lo = clamps.e_min;
      hi = clamps.e_max;
      break;
  }
  const double value = (*target)(k, d);
  if (value - step < lo || value + step > hi) throw Error(ErrorCode::Domain, "step too large");

  (*target)(k, d) = value + step;
  Matrix& other = which.field == ParameterSelector::Field::Mu    ? minus.mu
                  : which.field == ParameterSelector::Field::Var ? minus.var
                                                                 : minus.expertise;
  other(k, d) = value - step;

  const double up = log_likelihood(compose_soft(plus, h, clamps.var_lo), x, bank.kind);
  const double down = log_likelihood(compose_soft(minus, h, clamps.var_lo), x, bank.kind);
  return (up - down) / (2.0 * step);
}

}  // namespace dpm
