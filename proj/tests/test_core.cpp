#include <doctest.h>

#include <cmath>

#include "dpm/core.hpp"
#include "support.hpp"

using namespace dpm;
using namespace dpm::testing;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected dpm::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("latent state bookkeeping") {
  LatentState h{0, 1, 1, 0};
  CHECK(h.size() == 4);
  CHECK(h.count() == 2);
  CHECK(h.indices() == std::vector<std::size_t>{1, 2});
  h.set(1, false);
  CHECK(h.indices() == std::vector<std::size_t>{2});
  CHECK(LatentState(3).empty());
  CHECK(LatentState::single(3, 2) == LatentState{0, 0, 1});
}

TEST_CASE("hard composition copies the most expert active opinion") {
  ExpertBank b = ExpertBank::uniform(ObservationModel::Bernoulli, 3, 2);
  b.mu << 0.1, 0.2,  //
      0.3, 0.4,      //
      0.5, 0.6;
  b.expertise << 1, 5,  //
      2, 1,             //
      9, 1;
  auto c = compose_hard(b, LatentState{1, 1, 0});
  CHECK(c.mu(0) == 0.3);
  CHECK(c.mu(1) == 0.2);
  CHECK(c.support == std::vector<int>{1, 0});
  c = compose_hard(b, LatentState{1, 1, 1});
  CHECK(c.support == std::vector<int>{2, 0});

  SUBCASE("ties go to the lower index") {
    b.expertise.setOnes();
    CHECK(compose_hard(b, LatentState{0, 1, 1}).support == std::vector<int>{1, 1});
  }
}

TEST_CASE("hard log-likelihood agrees with a direct loop") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto kind = trial % 2 ? ObservationModel::Gaussian : ObservationModel::Bernoulli;
    const std::size_t K = pick(rng, 1, 6), D = pick(rng, 1, 9);
    const auto b = random_bank(rng, kind, K, D);
    const auto h = random_state(rng, K);
    const auto x = random_point(rng, kind, D);
    CHECK(log_likelihood(compose_hard(b, h), x, kind) == doctest::Approx(hard_loglik_oracle(b, h, x)).epsilon(1e-12));
  }
}

TEST_CASE("responsibilities are normalised expertise over active experts") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = pick(rng, 1, 6), D = pick(rng, 1, 7);
    const auto b = random_bank(rng, ObservationModel::Bernoulli, K, D);
    const auto h = random_state(rng, K);
    const auto r = responsibilities(b, h).r;
    for (std::size_t d = 0; d < D; ++d) {
      double total = 0, active_e = 0;
      for (std::size_t k = 0; k < K; ++k) active_e += h[k] ? b.expertise(k, d) : 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        if (!h[k]) CHECK(r(k, d) == 0.0);
        else CHECK(r(k, d) == doctest::Approx(b.expertise(k, d) / active_e).epsilon(1e-14));
        total += r(k, d);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("soft composition matches mixture moments") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto kind = trial % 2 ? ObservationModel::Gaussian : ObservationModel::Bernoulli;
    const std::size_t K = pick(rng, 1, 6), D = pick(rng, 1, 6);
    const auto b = random_bank(rng, kind, K, D);
    const auto h = random_state(rng, K);
    const auto c = compose_soft(b, h);
    for (std::size_t d = 0; d < D; ++d) {
      std::vector<double> w, m, v;
      for (std::size_t k = 0; k < K; ++k) {
        if (!h[k]) continue;
        w.push_back(b.expertise(k, d));
        m.push_back(b.mu(k, d));
        v.push_back(kind == ObservationModel::Gaussian ? b.var(k, d) : 0.0);
      }
      const auto mom = mixture_moments(w, m, v);
      CHECK(std::abs(c.mu(d) - mom.mean) < 1e-12);
      if (kind == ObservationModel::Gaussian) {
        CHECK(std::abs(c.var(d) - mom.var) < 1e-10);
        CHECK(c.var(d) >= *std::min_element(v.begin(), v.end()) - 1e-12);
      }
    }
  }
}

TEST_CASE("single active expert: hard and soft coincide with that expert") {
  Rng rng(8);
  const auto b = random_bank(rng, ObservationModel::Gaussian, 4, 5);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto h = LatentState::single(4, k);
    const auto hard = compose_hard(b, h);
    const auto soft = compose_soft(b, h);
    for (int d = 0; d < 5; ++d) {
      CHECK(hard.mu(d) == b.mu(k, d));
      CHECK(hard.var(d) == b.var(k, d));
      CHECK(soft.mu(d) == doctest::Approx(b.mu(k, d)).epsilon(1e-15));
      CHECK(soft.var(d) == doctest::Approx(b.var(k, d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("soft composition ignores a common rescaling of expertise") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    auto b = random_bank(rng, ObservationModel::Gaussian, 4, 4);
    const auto h = random_state(rng, 4);
    const auto before = compose_soft(b, h);
    b.expertise *= 37.5;
    const auto after = compose_soft(b, h);
    CHECK((before.mu - after.mu).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((before.var - after.var).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("soft variance respects the floor") {
  ExpertBank b = ExpertBank::uniform(ObservationModel::Gaussian, 2, 1);
  b.var.setConstant(1e-6);
  CHECK(compose_soft(b, LatentState{1, 1}, 1e-3).var(0) == 1e-3);
}

TEST_CASE("invalid latent states are rejected") {
  const auto b = ExpertBank::uniform(ObservationModel::Bernoulli, 3, 2);
  CHECK(code_of([&] { compose_hard(b, LatentState(3)); }) == ErrorCode::EmptyLatentState);
  CHECK(code_of([&] { compose_soft(b, LatentState(3)); }) == ErrorCode::EmptyLatentState);
  CHECK(code_of([&] { compose_soft(b, LatentState{1, 0}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("observations are validated") {
  const auto b = ExpertBank::uniform(ObservationModel::Bernoulli, 1, 2);
  const auto c = compose_hard(b, LatentState{1});
  const std::vector<double> half{0.5, 1.0}, shortx{1.0};
  CHECK(code_of([&] { log_likelihood(c, half, ObservationModel::Bernoulli); }) == ErrorCode::Domain);
  CHECK(code_of([&] { log_likelihood(c, shortx, ObservationModel::Bernoulli); }) == ErrorCode::Domain);
  const std::vector<double> ok{0.0, 1.0};
  CHECK(log_likelihood(c, ok, ObservationModel::Bernoulli) == doctest::Approx(2 * std::log(0.5)));
}

TEST_CASE("bank validation") {
  auto b = ExpertBank::uniform(ObservationModel::Bernoulli, 2, 2);
  CHECK_NOTHROW(b.validate());
  b.mu(0, 0) = 0.0;
  CHECK(code_of([&] { b.validate(); }) == ErrorCode::Domain);
  b = ExpertBank::uniform(ObservationModel::Gaussian, 2, 2);
  b.expertise(1, 1) = 0.0;
  CHECK(code_of([&] { b.validate(); }) == ErrorCode::Domain);
  b.expertise(1, 1) = 1.0;
  b.var(0, 1) = 0.0;
  CHECK(code_of([&] { b.validate(); }) == ErrorCode::Domain);
}

TEST_CASE("fixed partition baseline") {
  // Five pair blocks, each choosing between the patterns (0,1) and (1,0).
  std::vector<SubsetModel> blocks;
  for (std::size_t l = 0; l < 5; ++l) {
    SubsetModel m;
    m.dims = {2 * l, 2 * l + 1};
    m.mu.resize(2, 2);
    m.mu << 0, 1, 1, 0;
    blocks.push_back(m);
  }
  const auto data = [] {
    Matrix x(32, 10);
    for (int i = 0; i < 32; ++i)
      for (int l = 0; l < 5; ++l) {
        const int bit = (i >> (4 - l)) & 1;
        x(i, 2 * l) = bit;
        x(i, 2 * l + 1) = 1 - bit;
      }
    return x;
  }();

  SUBCASE("each point is explained exactly by one state") {
    for (int i = 0; i < 32; ++i) {
      LatentState h(5);
      for (int l = 0; l < 5; ++l) h.set(l, (i >> (4 - l)) & 1);
      const auto c = compose_fixed_partition(ObservationModel::Bernoulli, blocks, 10, h);
      CHECK(log_likelihood(c, row(data, i), ObservationModel::Bernoulli) == 0.0);
      CHECK(c.support == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3, 4, 4});
    }
  }

  SUBCASE("marginal under a uniform prior is 2^-5 per point") {
    for (int i = 0; i < 32; ++i) {
      double p = 0;
      for (int mask = 0; mask < 32; ++mask) {
        LatentState h(5);
        for (int l = 0; l < 5; ++l) h.set(l, (mask >> l) & 1);
        const auto c = compose_fixed_partition(ObservationModel::Bernoulli, blocks, 10, h);
        p += std::exp(log_likelihood(c, row(data, i), ObservationModel::Bernoulli)) / 32.0;
      }
      CHECK(p == doctest::Approx(1.0 / 32.0).epsilon(1e-15));
    }
  }

  SUBCASE("blocks must partition the dimensions") {
    auto overlap = blocks;
    overlap[1].dims = {1, 3};
    CHECK(code_of([&] { compose_fixed_partition(ObservationModel::Bernoulli, overlap, 10, LatentState(5)); }) ==
          ErrorCode::InvalidArgument);
    auto gap = blocks;
    gap.pop_back();
    CHECK(code_of([&] { compose_fixed_partition(ObservationModel::Bernoulli, gap, 10, LatentState(4)); }) ==
          ErrorCode::InvalidArgument);
  }
}
