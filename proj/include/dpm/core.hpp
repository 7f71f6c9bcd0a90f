#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "dpm/types.hpp"

namespace dpm {

/// K experts over D dimensions. Row k of each matrix belongs to expert k.
///
/// `var` is only populated for Gaussian banks. Expertise levels are strictly
/// positive; only their ordering among active experts matters for the hard
/// composition, while the smoothed composition uses their ratios.
struct ExpertBank {
  ObservationModel kind = ObservationModel::Bernoulli;
  Matrix mu;
  Matrix var;
  Matrix expertise;

  /// Bank with all opinions at 0.5 (Bernoulli) or 0 (Gaussian), unit
  /// variances and unit expertise.
  static ExpertBank uniform(ObservationModel kind, std::size_t num_experts, std::size_t num_dims);

  std::size_t num_experts() const { return static_cast<std::size_t>(mu.rows()); }
  std::size_t num_dims() const { return static_cast<std::size_t>(mu.cols()); }
  bool gaussian() const { return kind == ObservationModel::Gaussian; }

  /// Throws Error(Domain) if shapes disagree or any entry violates `clamps`.
  void validate(const Clamps& clamps = {}) const;

  friend bool operator==(const ExpertBank&, const ExpertBank&) = default;
};

/// Binary activation vector h.
class LatentState {
 public:
  LatentState() = default;
  explicit LatentState(std::size_t num_experts) : active_(num_experts, 0) {}
  LatentState(std::initializer_list<int> bits);

  static LatentState single(std::size_t num_experts, std::size_t k);

  std::size_t size() const { return active_.size(); }
  bool operator[](std::size_t k) const { return active_[k] != 0; }
  void set(std::size_t k, bool on = true) { active_[k] = on ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  std::vector<std::size_t> indices() const;

  friend bool operator==(const LatentState&, const LatentState&) = default;

 private:
  std::vector<std::uint8_t> active_;
};

/// r_k(d): per-dimension mixture weights of the active experts.
struct ResponsibilityMatrix {
  Matrix r;
};

struct ComposedDistribution {
  Vector mu;
  Vector var;                // Gaussian only
  std::vector<int> support;  // hard: winning expert per dimension; fixed partition: owning block
};

ResponsibilityMatrix responsibilities(const ExpertBank& bank, const LatentState& h);

/// Maximum-expertise composition. Each dimension copies the parameters of the
/// active expert with the largest expertise; ties go to the lowest index.
ComposedDistribution compose_hard(const ExpertBank& bank, const LatentState& h);

/// Expertise-weighted mixture. For Gaussian banks the result is the
/// moment-matched Gaussian of the per-dimension mixture, floored at `var_lo`.
ComposedDistribution compose_soft(const ExpertBank& bank, const LatentState& h, double var_lo = Clamps{}.var_lo);

ComposedDistribution compose(const ExpertBank& bank, const LatentState& h, Composition rule,
                             double var_lo = Clamps{}.var_lo);

/// Log-density of a single observed coordinate.
inline double log_density(ObservationModel kind, double x, double mu, double var) {
  if (kind == ObservationModel::Bernoulli) {
    if (x == 1.0) return std::log(mu);
    if (x == 0.0) return std::log1p(-mu);
    return x * std::log(mu) + (1.0 - x) * std::log1p(-mu);
  }
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  const double diff = x - mu;
  return -0.5 * (diff * diff / var + std::log(var) + kLog2Pi);
}

/// Sum over dimensions of the per-coordinate log-density. Binary data must
/// be exactly 0 or 1.
double log_likelihood(const ComposedDistribution& comp, std::span<const double> x, ObservationModel kind);

/// Throws Error(Domain) unless x has the expected length and, for Bernoulli,
/// only 0/1 entries.
void check_observation(std::span<const double> x, std::size_t num_dims, ObservationModel kind);

/// One block of a fixed partition model. `mu` (and `var` for Gaussian) has
/// one row if the block ignores its latent bit, or two rows selected by h(l).
struct SubsetModel {
  std::vector<std::size_t> dims;
  Matrix mu;
  Matrix var;
};

/// Static partition baseline: each dimension takes the parameters of the
/// block that owns it. `h` has one bit per block. Probabilities of exactly
/// 0 or 1 are allowed here, so log_likelihood may return -inf.
ComposedDistribution compose_fixed_partition(ObservationModel kind, std::span<const SubsetModel> models,
                                             std::size_t num_dims, const LatentState& h);

inline std::span<const double> row_span(const Matrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace dpm
