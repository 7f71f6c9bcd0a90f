#include <doctest.h>

#include <cmath>

#include "dpm/calculus.hpp"
#include "dpm/dataio.hpp"
#include "dpm/learning.hpp"
#include "support.hpp"

using namespace dpm;
using namespace dpm::testing;

namespace {

Dataset random_dataset(Rng& rng, ObservationModel kind, std::size_t n, std::size_t d) {
  Dataset ds{data_kind_for(kind), Matrix(n, d), std::nullopt};
  for (Eigen::Index i = 0; i < ds.data.size(); ++i)
    ds.data.data()[i] = kind == ObservationModel::Bernoulli ? double(rng() & 1u) : uniform(rng, -2, 3);
  return ds;
}

std::vector<LatentState> random_states(Rng& rng, std::size_t n, std::size_t K) {
  std::vector<LatentState> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(random_state(rng, K));
  return s;
}

// Responsibility-weighted average with pseudo-count, written out directly.
// `value(i, k, d)` gives the statistic averaged.
template <class Value>
double weighted_oracle(const ExpertBank& b, const std::vector<LatentState>& states, std::size_t k, std::size_t d,
                       double eps, double prior, Value&& value) {
  long double num = eps * prior, den = eps;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i][k]) continue;
    long double total = 0;
    for (std::size_t j = 0; j < b.num_experts(); ++j) total += states[i][j] ? b.expertise(j, d) : 0.0;
    const long double r = b.expertise(k, d) / total;
    num += r * value(i, k, d);
    den += r;
  }
  return static_cast<double>(num / den);
}

}  // namespace

TEST_CASE("shrinkage targets are the column mean and population variance") {
  Dataset ds{DataKind::Continuous, Matrix(4, 2), std::nullopt};
  ds.data << 1, 5, 2, 5, 3, 5, 6, 5;
  const auto t = shrinkage_targets(ds);
  CHECK(t.mu0(0) == 3.0);
  CHECK(t.v0(0) == doctest::Approx(3.5));
  CHECK(t.v0(1) == Clamps{}.var_lo);
}

TEST_CASE("initial bank") {
  Rng rng(1);
  const auto ds = random_dataset(rng, ObservationModel::Gaussian, 40, 6);
  TrainConfig cfg;
  cfg.seed = 42;
  const auto a = init_bank(ds, ObservationModel::Gaussian, 5, cfg);
  CHECK(a == init_bank(ds, ObservationModel::Gaussian, 5, cfg));
  cfg.seed = 43;
  CHECK_FALSE(a == init_bank(ds, ObservationModel::Gaussian, 5, cfg));
  const auto t = shrinkage_targets(ds);
  for (int k = 0; k < 5; ++k)
    for (int d = 0; d < 6; ++d) {
      CHECK(std::abs(a.mu(k, d) - t.mu0(d)) <= 0.1);
      CHECK(a.var(k, d) == t.v0(d));
      CHECK(a.expertise(k, d) == 1.0);
    }

  SUBCASE("Bernoulli opinions stay inside the clamps") {
    Dataset ones{DataKind::Binary, Matrix::Ones(5, 3), std::nullopt};
    const auto b = init_bank(ones, ObservationModel::Bernoulli, 4, TrainConfig{});
    CHECK(b.mu.maxCoeff() <= 1 - 1e-4);
    CHECK_NOTHROW(b.validate());
  }
  SUBCASE("kind mismatch is rejected") { CHECK_THROWS_AS(init_bank(ds, ObservationModel::Bernoulli, 2, cfg), Error); }
}

TEST_CASE("mean and variance updates match a direct weighted average") {
  Rng rng(2);
  for (const auto kind : {ObservationModel::Bernoulli, ObservationModel::Gaussian}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = pick(rng, 1, 150), K = pick(rng, 1, 5), D = pick(rng, 1, 6);
      const auto ds = random_dataset(rng, kind, n, D);
      const auto b = random_bank(rng, kind, K, D, 0.1, 10.0);
      const auto states = random_states(rng, n, K);
      const auto t = shrinkage_targets(ds);
      const double eps = uniform(rng, 0.0, 3.0);
      const Matrix mu = update_means(b, ds, states, t, eps, {}, 3);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t d = 0; d < D; ++d) {
          const bool used = std::any_of(states.begin(), states.end(), [&](const auto& h) { return h[k]; });
          if (!used && eps == 0.0) continue;
          double want = weighted_oracle(b, states, k, d, eps, t.mu0(d), [&](std::size_t i, auto, auto dd) {
            return ds.data(i, dd);
          });
          if (kind == ObservationModel::Bernoulli) want = std::clamp(want, 1e-4, 1 - 1e-4);
          CHECK(mu(k, d) == doctest::Approx(want).epsilon(1e-12));
        }
      if (kind == ObservationModel::Gaussian) {
        const Matrix var = update_variances(b, ds, states, mu, t, eps, {}, 2);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t d = 0; d < D; ++d) {
            const bool used = std::any_of(states.begin(), states.end(), [&](const auto& h) { return h[k]; });
            if (!used && eps == 0.0) continue;
            const double want = weighted_oracle(b, states, k, d, eps, t.v0(d), [&](std::size_t i, auto kk, auto dd) {
              const double dev = ds.data(i, dd) - mu(kk, dd);
              return dev * dev;
            });
            CHECK(var(k, d) == doctest::Approx(std::max(want, 1e-6)).epsilon(1e-10));
          }
      }
    }
  }
}

TEST_CASE("unused experts fall back to the dataset statistics") {
  Rng rng(3);
  const auto ds = random_dataset(rng, ObservationModel::Gaussian, 10, 3);
  const auto b = random_bank(rng, ObservationModel::Gaussian, 3, 3);
  const std::vector<LatentState> states(10, LatentState{1, 0, 0});
  const auto t = shrinkage_targets(ds);
  const Matrix mu = update_means(b, ds, states, t, 0.0);
  CHECK(mu.row(1).transpose().isApprox(t.mu0));
  CHECK(update_variances(b, ds, states, mu, t, 0.0).row(2).transpose().isApprox(t.v0));
  CHECK(hard_ml_update(b, ds, states, t).row(2).transpose().isApprox(t.mu0));
  CHECK_THROWS_AS(update_variances(random_bank(rng, ObservationModel::Bernoulli, 3, 3),
                                   random_dataset(rng, ObservationModel::Bernoulli, 10, 3), states, mu, t, 0.0),
                  Error);
}

TEST_CASE("large pseudo-counts pull opinions to the dataset mean") {
  Rng rng(4);
  const auto ds = random_dataset(rng, ObservationModel::Bernoulli, 30, 5);
  const auto b = random_bank(rng, ObservationModel::Bernoulli, 4, 5);
  const auto states = random_states(rng, 30, 4);
  const auto t = shrinkage_targets(ds);
  const Matrix mu = update_means(b, ds, states, t, 1e12);
  for (int k = 0; k < 4; ++k) CHECK((mu.row(k).transpose() - t.mu0).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("expertise moves by the factor C in the direction of the summed gradient") {
  Rng rng(5);
  for (const auto kind : {ObservationModel::Bernoulli, ObservationModel::Gaussian}) {
    const auto ds = random_dataset(rng, kind, 70, 4);
    auto b = random_bank(rng, kind, 4, 4);
    b.expertise(0, 0) = Clamps{}.e_max;
    b.expertise(1, 1) = Clamps{}.e_min;
    const auto states = random_states(rng, 70, 4);
    Matrix g = Matrix::Zero(4, 4);
    for (std::size_t i = 0; i < 70; ++i) g += dll_de(b, states[i], row(ds.data, i));
    TrainConfig cfg;
    cfg.c = 3.0;
    cfg.threads = 4;
    const Matrix e = update_expertise(b, ds, states, cfg);
    for (int k = 0; k < 4; ++k)
      for (int d = 0; d < 4; ++d) {
        CAPTURE(g(k, d));
        const double old = b.expertise(k, d);
        if (g(k, d) > 70e-8) CHECK(e(k, d) == std::min(old * 3.0, Clamps{}.e_max));
        else if (g(k, d) < -70e-8) CHECK(e(k, d) == std::max(old / 3.0, Clamps{}.e_min));
        else CHECK(e(k, d) == old);
      }
    cfg.dead_zone = 1e300;
    CHECK(update_expertise(b, ds, states, cfg) == b.expertise);
  }
}

TEST_CASE("soft mean update approaches the hard average as expertise separates") {
  Rng rng(6);
  const auto ds = random_dataset(rng, ObservationModel::Bernoulli, 60, 5);
  auto b = random_bank(rng, ObservationModel::Bernoulli, 3, 5);
  for (int d = 0; d < 5; ++d) {
    b.expertise(0, d) = 1e-9;
    b.expertise(1, d) = 1.0;
    b.expertise(2, d) = 1e9;
  }
  auto states = random_states(rng, 60, 3);
  for (int k = 0; k < 3; ++k) states[k] = LatentState::single(3, k);
  const auto t = shrinkage_targets(ds);
  const Matrix soft = update_means(b, ds, states, t, 0.0);
  const Matrix hard = hard_ml_update(b, ds, states, t);
  CHECK((soft - hard).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("training is reproducible and independent of the thread count") {
  Rng rng(7);
  const auto ds = random_dataset(rng, ObservationModel::Gaussian, 300, 6);
  TrainConfig cfg;
  cfg.iterations = 4;
  cfg.seed = 9;
  const auto one = fit(ds, ObservationModel::Gaussian, 5, cfg);
  cfg.threads = 5;
  const auto many = fit(ds, ObservationModel::Gaussian, 5, cfg);
  CHECK(one.bank == many.bank);
  REQUIRE(one.report.iterations.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(one.report.iterations[i].iteration == i + 1);
    CHECK(one.report.iterations[i].mean_ll == many.report.iterations[i].mean_ll);
    CHECK(one.report.iterations[i].recon_error == many.report.iterations[i].recon_error);
  }
  CHECK_NOTHROW(one.bank.validate());
}

TEST_CASE("callback sees every iteration") {
  const auto ds = gen_synthetic();
  TrainConfig cfg;
  cfg.iterations = 3;
  std::vector<std::size_t> seen;
  fit(ds, ObservationModel::Bernoulli, 4, cfg, [&](const IterationReport& r) { seen.push_back(r.iteration); });
  CHECK(seen == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("configuration is validated") {
  const auto ds = gen_synthetic();
  TrainConfig cfg;
  cfg.c = 1.0;
  CHECK_THROWS_AS(fit(ds, ObservationModel::Bernoulli, 3, cfg), Error);
  cfg = {};
  cfg.iterations = 0;
  CHECK_THROWS_AS(fit(ds, ObservationModel::Bernoulli, 3, cfg), Error);
  cfg = {};
  cfg.eps = -1.0;
  CHECK_THROWS_AS(fit(ds, ObservationModel::Bernoulli, 3, cfg), Error);
  CHECK_THROWS_AS(fit(ds, ObservationModel::Bernoulli, 0, TrainConfig{}), Error);
}

TEST_CASE("evaluation") {
  SUBCASE("a mean model reconstructs a constant dataset exactly") {
    Dataset ds{DataKind::Continuous, Matrix::Constant(8, 3, 0.25), std::nullopt};
    auto b = ExpertBank::uniform(ObservationModel::Gaussian, 1, 3);
    b.mu.setConstant(0.25);
    const auto ev = evaluate(b, ds);
    CHECK(ev.recon_error == 0.0);
    CHECK(ev.avg_active == 1.0);
  }
  SUBCASE("hand-built synthetic bank has zero Hamming error with five experts") {
    const auto ev = evaluate(ideal_synthetic_bank(), gen_synthetic());
    CHECK(ev.recon_error == 0.0);
    CHECK(ev.avg_active == 5.0);
  }
  SUBCASE("Hamming rate counts thresholded mismatches") {
    Dataset ds{DataKind::Binary, Matrix(2, 2), std::nullopt};
    ds.data << 1, 0, 1, 1;
    auto b = ExpertBank::uniform(ObservationModel::Bernoulli, 1, 2);
    b.mu << 0.9, 0.2;
    CHECK(evaluate(b, ds).recon_error == 0.25);
  }
}
