// Test-only oracles and random instance generators. Nothing here calls into
// the library's composition code, so it can be used to check it.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

#include "dpm/core.hpp"
#include "dpm/dataset.hpp"

namespace dpm::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline ExpertBank random_bank(Rng& rng, ObservationModel kind, std::size_t K, std::size_t D, double e_lo = 0.5,
                              double e_hi = 2.0) {
  ExpertBank b;
  b.kind = kind;
  b.mu.resize(K, D);
  b.expertise.resize(K, D);
  if (kind == ObservationModel::Gaussian) b.var.resize(K, D);
  for (Eigen::Index k = 0; k < b.mu.rows(); ++k) {
    for (Eigen::Index d = 0; d < b.mu.cols(); ++d) {
      b.mu(k, d) = kind == ObservationModel::Bernoulli ? uniform(rng, 0.05, 0.95) : uniform(rng, -2.0, 2.0);
      b.expertise(k, d) = uniform(rng, e_lo, e_hi);
      if (kind == ObservationModel::Gaussian) b.var(k, d) = uniform(rng, 0.2, 3.0);
    }
  }
  return b;
}

inline LatentState random_state(Rng& rng, std::size_t K) {
  LatentState h(K);
  while (h.empty()) {
    for (std::size_t k = 0; k < K; ++k) h.set(k, rng() & 1u);
  }
  return h;
}

inline std::vector<double> random_point(Rng& rng, ObservationModel kind, std::size_t D) {
  std::vector<double> x(D);
  for (auto& v : x) v = kind == ObservationModel::Bernoulli ? double(rng() & 1u) : uniform(rng, -3.0, 3.0);
  return x;
}

// Per-dimension mixture moments computed from first principles:
// E[X] = sum w m, E[X^2] = sum w (v + m^2), Var = E[X^2] - E[X]^2.
struct Moments {
  double mean;
  double var;
};

inline Moments mixture_moments(const std::vector<double>& w, const std::vector<double>& m,
                               const std::vector<double>& v) {
  long double total = 0, first = 0, second = 0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w[i];
  for (std::size_t i = 0; i < w.size(); ++i) {
    const long double p = w[i] / total;
    first += p * m[i];
    second += p * (v[i] + static_cast<long double>(m[i]) * m[i]);
  }
  return {static_cast<double>(first), static_cast<double>(second - first * first)};
}

// Log-likelihood of x under a hard composition written out as a plain loop.
inline double hard_loglik_oracle(const ExpertBank& b, const LatentState& h, const std::vector<double>& x) {
  double total = 0;
  for (Eigen::Index d = 0; d < b.mu.cols(); ++d) {
    Eigen::Index best = -1;
    for (Eigen::Index k = 0; k < b.mu.rows(); ++k) {
      if (h[k] && (best < 0 || b.expertise(k, d) > b.expertise(best, d))) best = k;
    }
    const double m = b.mu(best, d);
    if (b.kind == ObservationModel::Bernoulli) {
      total += x[d] == 1.0 ? std::log(m) : std::log(1.0 - m);
    } else {
      const double v = b.var(best, d);
      total += -0.5 * std::log(2 * M_PI * v) - (x[d] - m) * (x[d] - m) / (2 * v);
    }
  }
  return total;
}

struct Exhaustive {
  LatentState best;
  double ll = -std::numeric_limits<double>::infinity();
};

// Maximum over all 2^K - 1 nonempty states of `score(h)`.
template <class Score>
Exhaustive exhaustive_search(std::size_t K, Score&& score) {
  Exhaustive out;
  for (unsigned long mask = 1; mask < (1ul << K); ++mask) {
    LatentState h(K);
    for (std::size_t k = 0; k < K; ++k) h.set(k, (mask >> k) & 1u);
    const double ll = score(h);
    if (ll > out.ll) {
      out.ll = ll;
      out.best = h;
    }
  }
  return out;
}

// The hand-built bank for the 10-bit synthetic data: expert 2l and 2l+1
// own dimension pair l with the two opposite patterns, are indifferent
// elsewhere and have negligible expertise there.
inline ExpertBank ideal_synthetic_bank(double lo = 1e-4) {
  ExpertBank b = ExpertBank::uniform(ObservationModel::Bernoulli, 10, 10);
  b.expertise.setConstant(1e-3);
  for (int pair = 0; pair < 5; ++pair) {
    const int a = 2 * pair, c = 2 * pair + 1;
    b.mu(a, a) = lo;
    b.mu(a, c) = 1 - lo;
    b.mu(c, a) = 1 - lo;
    b.mu(c, c) = lo;
    b.expertise(a, a) = b.expertise(a, c) = b.expertise(c, a) = b.expertise(c, c) = 1.0;
  }
  return b;
}

inline std::vector<double> row(const Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), m.data() + (i + 1) * m.cols()};
}

}  // namespace dpm::testing
