#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dpm/core.hpp"
#include "dpm/dataset.hpp"
#include "dpm/inference.hpp"

namespace dpm {

struct TrainConfig {
  std::size_t iterations = 10;
  /// Multiplicative expertise step; must exceed 1.
  double c = 2.0;
  /// Gradients with |G| <= dead_zone leave expertise unchanged. Unset means 1e-8 * N.
  std::optional<double> dead_zone;
  /// Pseudo-count pulling opinions and variances towards the dataset
  /// statistics. Unset means 0.01 * N.
  std::optional<double> eps;
  std::uint64_t seed = 0;
  /// Half-width of the uniform noise added to the dataset mean at init.
  double init_noise = 0.1;
  /// Half-width, in log2 units, of uniform jitter applied to the initial
  /// expertise. 0 starts every expert at expertise 1.
  double init_expertise_jitter = 0.0;
  /// Inference used inside the learning loop.
  InferenceConfig inference{.composition = Composition::Soft};
  /// Inference used for the per-iteration report.
  InferenceConfig evaluation{.composition = Composition::Hard};
  Clamps clamps;
  unsigned threads = 1;

  double eps_for(std::size_t n) const { return eps.value_or(0.01 * static_cast<double>(n)); }
  double dead_zone_for(std::size_t n) const { return dead_zone.value_or(1e-8 * static_cast<double>(n)); }
  void validate() const;
};

/// Dataset mean and (population) variance per dimension.
struct ShrinkageTargets {
  Vector mu0;
  Vector v0;
};

ShrinkageTargets shrinkage_targets(const Dataset& data, const Clamps& clamps = {});

struct IterationReport {
  std::size_t iteration = 0;
  double mean_ll = 0.0;      // smoothed model, states from this iteration
  double recon_error = 0.0;  // hard composition: Hamming rate or MSE
  double avg_active = 0.0;
};

struct TrainReport {
  std::vector<IterationReport> iterations;
};

struct FitResult {
  ExpertBank bank;
  TrainReport report;
};

ExpertBank init_bank(const Dataset& data, ObservationModel kind, std::size_t num_experts, const TrainConfig& cfg);

/// Sum over points of dll_de, reduced in fixed block order.
Matrix batch_expertise_gradient(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                                unsigned threads = 1, double var_lo = Clamps{}.var_lo);

/// Sign-of-gradient step: multiply by C above the dead zone, divide below it.
Matrix update_expertise(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                        const TrainConfig& cfg);

/// Responsibility-weighted means with shrinkage. Responsibilities are derived
/// from the bank's current expertise and `states`.
Matrix update_means(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                    const ShrinkageTargets& targets, double eps, const Clamps& clamps = {}, unsigned threads = 1);

/// Responsibility-weighted variances around `new_mu`, floored at var_lo.
Matrix update_variances(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                        const Matrix& new_mu, const ShrinkageTargets& targets, double eps, const Clamps& clamps = {},
                        unsigned threads = 1);

/// Empirical mean over the points whose hard support assigns (k, d) to k.
/// Cells with no such point fall back to mu0.
Matrix hard_ml_update(const ExpertBank& bank, const Dataset& data, std::span<const LatentState> states,
                      const ShrinkageTargets& targets, const Clamps& clamps = {});

using IterationCallback = std::function<void(const IterationReport&)>;

/// Alternates inference, expertise update, responsibility recomputation and
/// opinion/variance updates for cfg.iterations rounds.
FitResult fit(const Dataset& data, ObservationModel kind, std::size_t num_experts, const TrainConfig& cfg,
              const IterationCallback& on_iteration = {});

/// One learning round on an existing bank; returns the states it inferred.
std::vector<LatentState> train_step(ExpertBank& bank, const Dataset& data, const ShrinkageTargets& targets,
                                    const TrainConfig& cfg);

struct Evaluation {
  double recon_error = 0.0;
  double mean_ll = 0.0;
  double avg_active = 0.0;
};

/// Reconstruction quality under `cfg`: binary data reports the Hamming rate
/// of the 0.5-thresholded composed means, continuous data the mean squared
/// error; both averaged over points and dimensions.
Evaluation evaluate(const ExpertBank& bank, const Dataset& data, const InferenceConfig& cfg = {},
                    unsigned threads = 1);

}  // namespace dpm
