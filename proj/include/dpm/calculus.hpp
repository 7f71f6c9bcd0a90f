#pragma once

#include <cstddef>
#include <span>

#include "dpm/core.hpp"

namespace dpm {

/// Derivative of the per-coordinate log-likelihood w.r.t. the composed mean.
/// `comp_var` is ignored for Bernoulli.
double dll_dmu(double comp_mu, double x, ObservationModel kind, double comp_var = 1.0);

/// Gaussian derivative w.r.t. the composed variance.
double dll_dvar(double comp_mu, double comp_var, double x);

/// Derivative w.r.t. one expert's opinion: the composed mean is linear in it
/// with slope r_k.
double dll_dmu_k(double r_k, double comp_mu, double x, ObservationModel kind, double comp_var = 1.0);

/// Gaussian only: the moment-matched composed variance also moves with an
/// expert's opinion, d var / d mu_k = 2 r_k (mu_k - mu). dll_dmu_k holds the
/// composed variance fixed; add dll_dvar * dvar_dmu_k for the total derivative.
double dvar_dmu_k(double r_k, double mu_k, double comp_mu);

/// Gaussian derivative w.r.t. one expert's variance (d var / d v_k = r_k).
double dll_dvar_k(double r_k, double comp_mu, double comp_var, double x);

/// Bernoulli second derivative w.r.t. one expert's opinion. Never positive.
double d2ll_dmu_k2(double r_k, double comp_mu, double x);

/// d(log-likelihood)/d e_k(d) of the smoothed model for one point. Rows of
/// inactive experts are zero.
Matrix dll_de(const ExpertBank& bank, const LatentState& h, std::span<const double> x,
              double var_lo = Clamps{}.var_lo);

/// Adds dll_de(bank, h, x) into `grad` without allocating a fresh matrix.
void accumulate_dll_de(const ExpertBank& bank, const LatentState& h, std::span<const double> x, Matrix& grad,
                       double var_lo = Clamps{}.var_lo);

struct ParameterSelector {
  enum class Field { Mu, Var, Expertise };
  Field field = Field::Mu;
  std::size_t expert = 0;
  std::size_t dim = 0;
};

/// Central difference of log_likelihood(compose_soft(bank, h), x) w.r.t. one
/// parameter. Throws "step too large" if either probe leaves the clamps.
double finite_diff_loglik(const ExpertBank& bank, const LatentState& h, std::span<const double> x,
                          ParameterSelector which, double step = 1e-6, const Clamps& clamps = {});

}  // namespace dpm
