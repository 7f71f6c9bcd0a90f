#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dpm/core.hpp"
#include "dpm/dataset.hpp"

namespace dpm {

struct InferenceConfig {
  /// 0 means no limit. Values above K are capped at K.
  std::size_t max_active = 0;
  /// A step is taken only if it improves the log-likelihood by more than this.
  double min_gain = 0.0;
  Composition composition = Composition::Hard;
  double var_lo = Clamps{}.var_lo;

  /// Fixed-budget inference: activate exactly `m` experts (or all K if fewer).
  static InferenceConfig budget(std::size_t m, Composition rule = Composition::Hard) {
    InferenceConfig cfg;
    cfg.max_active = m;
    cfg.min_gain = -std::numeric_limits<double>::infinity();
    cfg.composition = rule;
    return cfg;
  }
};

struct TraceStep {
  std::size_t expert = 0;
  double log_likelihood = 0.0;
};

struct InferenceResult {
  LatentState h;
  std::vector<TraceStep> trace;
  double final_ll = 0.0;
};

/// Likelihood matching pursuit. The first expert is the best single expert
/// and is always taken; afterwards the inactive expert with the largest gain
/// is added until no gain exceeds `min_gain` or the budget is exhausted.
InferenceResult lmp(const ExpertBank& bank, std::span<const double> x, const InferenceConfig& cfg = {});

ComposedDistribution reconstruct(const ExpertBank& bank, const LatentState& h, Composition rule = Composition::Hard);

/// Element i is lmp(bank, row i). Deterministic for any `threads`.
std::vector<InferenceResult> infer_batch(const ExpertBank& bank, const Dataset& data, const InferenceConfig& cfg = {},
                                         unsigned threads = 1);

}  // namespace dpm
