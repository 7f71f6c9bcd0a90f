#include "dpm/inference.hpp"

#include <algorithm>
#include <sstream>

#include "parallel.hpp"

namespace dpm {

namespace {

// Scores "current active set plus one candidate" without recomposing the
// whole distribution. Totals are accumulated in dimension order.
class HardScorer {
 public:
  HardScorer(const ExpertBank& bank, std::span<const double> x)
      : bank_(bank), logp_(bank.mu.rows(), bank.mu.cols()), winner_(x.size(), -1) {
    for (Eigen::Index k = 0; k < bank.mu.rows(); ++k)
      for (Eigen::Index d = 0; d < bank.mu.cols(); ++d)
        logp_(k, d) = log_density(bank.kind, x[d], bank.mu(k, d), bank.gaussian() ? bank.var(k, d) : 0.0);
  }

  double with(std::size_t cand) const {
    const auto k = static_cast<Eigen::Index>(cand);
    double total = 0.0;
    for (Eigen::Index d = 0; d < logp_.cols(); ++d) {
      const int w = winner_[d];
      total += takes(k, w, d) ? logp_(k, d) : logp_(w, d);
    }
    return total;
  }

  void activate(std::size_t cand) {
    const auto k = static_cast<Eigen::Index>(cand);
    for (Eigen::Index d = 0; d < logp_.cols(); ++d)
      if (takes(k, winner_[d], d)) winner_[d] = static_cast<int>(k);
  }

 private:
  bool takes(Eigen::Index k, int w, Eigen::Index d) const {
    if (w < 0) return true;
    const double ek = bank_.expertise(k, d);
    const double ew = bank_.expertise(w, d);
    return ek > ew || (ek == ew && k < w);
  }

  const ExpertBank& bank_;
  Matrix logp_;
  std::vector<int> winner_;
};

class SoftScorer {
 public:
  SoftScorer(const ExpertBank& bank, std::span<const double> x, double var_lo)
      : bank_(bank),
        x_(x),
        var_lo_(var_lo),
        sum_e_(Vector::Zero(bank.mu.cols())),
        sum_em_(Vector::Zero(bank.mu.cols())),
        sum_eq_(Vector::Zero(bank.mu.cols())) {}

  double with(std::size_t cand) const {
    const auto k = static_cast<Eigen::Index>(cand);
    const bool gaussian = bank_.gaussian();
    double total = 0.0;
    for (Eigen::Index d = 0; d < bank_.mu.cols(); ++d) {
      const double e = bank_.expertise(k, d);
      const double m = bank_.mu(k, d);
      const double norm = sum_e_[d] + e;
      const double mean = (sum_em_[d] + e * m) / norm;
      double v = 0.0;
      if (gaussian) {
        const double q = bank_.var(k, d) + m * m;
        v = std::max((sum_eq_[d] + e * q) / norm - mean * mean, var_lo_);
      }
      total += log_density(bank_.kind, x_[d], mean, v);
    }
    return total;
  }

  void activate(std::size_t cand) {
    const auto k = static_cast<Eigen::Index>(cand);
    for (Eigen::Index d = 0; d < bank_.mu.cols(); ++d) {
      const double e = bank_.expertise(k, d);
      const double m = bank_.mu(k, d);
      sum_e_[d] += e;
      sum_em_[d] += e * m;
      if (bank_.gaussian()) sum_eq_[d] += e * (bank_.var(k, d) + m * m);
    }
  }

 private:
  const ExpertBank& bank_;
  std::span<const double> x_;
  double var_lo_;
  Vector sum_e_;
  Vector sum_em_;
  Vector sum_eq_;
};

template <class Scorer>
InferenceResult pursue(const ExpertBank& bank, Scorer& scorer, const InferenceConfig& cfg) {
  const std::size_t num_experts = bank.num_experts();
  const std::size_t budget = cfg.max_active == 0 ? num_experts : std::min(cfg.max_active, num_experts);

  InferenceResult out;
  out.h = LatentState(num_experts);
  double current = 0.0;
  while (out.trace.size() < budget) {
    std::size_t best = num_experts;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < num_experts; ++k) {
      if (out.h[k]) continue;
      const double ll = scorer.with(k);
      if (best == num_experts || ll > best_ll) {
        best = k;
        best_ll = ll;
      }
    }
    if (best == num_experts) break;
    // The first activation is forced: an empty state has no likelihood.
    if (!out.trace.empty() && !(best_ll - current > cfg.min_gain)) break;
    scorer.activate(best);
    out.h.set(best);
    out.trace.push_back({best, best_ll});
    current = best_ll;
  }
  return out;
}

}  // namespace

InferenceResult lmp(const ExpertBank& bank, std::span<const double> x, const InferenceConfig& cfg) {
  check_observation(x, bank.num_dims(), bank.kind);
  InferenceResult out;
  if (cfg.composition == Composition::Hard) {
    HardScorer scorer(bank, x);
    out = pursue(bank, scorer, cfg);
  } else {
    SoftScorer scorer(bank, x, cfg.var_lo);
    out = pursue(bank, scorer, cfg);
  }
  out.final_ll = log_likelihood(compose(bank, out.h, cfg.composition, cfg.var_lo), x, bank.kind);
  return out;
}

ComposedDistribution reconstruct(const ExpertBank& bank, const LatentState& h, Composition rule) {
  return compose(bank, h, rule);
}

std::vector<InferenceResult> infer_batch(const ExpertBank& bank, const Dataset& data, const InferenceConfig& cfg,
                                         unsigned threads) {
  if (data.kind != data_kind_for(bank.kind))
    throw Error(ErrorCode::Domain, std::string("dataset kind does not match ") + to_string(bank.kind) + " bank");
  if (data.n() > 0 && data.d() != bank.num_dims()) {
    std::ostringstream msg;
    msg << "dataset has " << data.d() << " dimensions, model has " << bank.num_dims();
    throw Error(ErrorCode::Domain, msg.str());
  }
  std::vector<InferenceResult> results(data.n());
  detail::parallel_for(data.n(), threads, [&](std::size_t i) {
    try {
      results[i] = lmp(bank, row_span(data.data, static_cast<Eigen::Index>(i)), cfg);
    } catch (const Error& e) {
      throw Error(e.code(), "point " + std::to_string(i) + ": " + e.what());
    }
  });
  return results;
}

}  // namespace dpm
