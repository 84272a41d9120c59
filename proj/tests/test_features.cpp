#include <catch_amalgamated.hpp>

#include <cmath>

#include "deeptest/dgp.hpp"
#include "deeptest/features.hpp"
#include "deeptest/rng.hpp"

using namespace deeptest;

namespace {

PseudoSample comonotone(int n) {
  std::vector<int> r(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) r[static_cast<std::size_t>(k)] = k + 1;
  return pseudo_from_ranks(r, r);
}

}  // namespace

TEST_CASE("image grid: single-cell concentration") {
  PseudoSample ps;
  ps.u.assign(400, 0.02);
  ps.v.assign(400, 0.02);
  const ImageGrid g = image_grid(ps);
  CHECK(g.count_at(0, 0) == 400);
  CHECK(g.bin_at(0, 0) == 1.0);
  int total = 0;
  for (const int c : g.raw_counts) total += c;
  CHECK(total == 400);
  for (std::size_t i = 1; i < g.bins.size(); ++i) CHECK(g.bins[i] == 0.0);
}

TEST_CASE("image grid: counts always partition the sample") {
  const BivariateSample s = gen_independent(377, 5);
  const ImageGrid g = image_grid(to_pseudo(s));
  int total = 0;
  for (const int c : g.raw_counts) total += c;
  CHECK(total == 377);
  CHECK(*std::max_element(g.bins.begin(), g.bins.end()) == 1.0);
}

TEST_CASE("image grid: comonotone n=25 fills exactly the diagonal") {
  const ImageGrid g = image_grid(comonotone(25));
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j) CHECK(g.count_at(i, j) == (i == j ? 1 : 0));
}

TEST_CASE("image grid transposes when the coordinates swap") {
  const BivariateSample s = gen_independent(200, 9);
  const PseudoSample ps = to_pseudo(s);
  PseudoSample swapped;
  swapped.u = ps.v;
  swapped.v = ps.u;
  swapped.ranks_u = ps.ranks_v;
  swapped.ranks_v = ps.ranks_u;
  const ImageGrid a = image_grid(ps);
  const ImageGrid b = image_grid(swapped);
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j) CHECK(a.count_at(i, j) == b.count_at(j, i));
}

TEST_CASE("indicator vector layout and frozen entries") {
  FeatureConfig cfg;
  cfg.measures.rng_seed = 3;
  cfg.perms.rng_seed = 4;
  const PseudoSample ps = comonotone(50);
  const IndicatorVector iv = indicator_vector(ps, cfg);
  CHECK(iv[Indicator::SampleSize] == 50.0);
  CHECK(iv[Indicator::Spearman] == 1.0);
  CHECK(iv[Indicator::Kendall] == 1.0);
  CHECK(iv[Indicator::Blomqvist] == 1.0);
  for (int s = 0; s < 6; ++s) {
    const double v = iv.values[static_cast<std::size_t>(Indicator::HhgChi2Sum) + static_cast<std::size_t>(s)];
    CHECK(v >= 0.0);
    CHECK(v <= 100.0 / 101.0);
  }
  CHECK_THROWS_AS(indicator_vector(comonotone(4), cfg), InsufficientSampleError);
}

TEST_CASE("featurization is deterministic given config seeds") {
  const BivariateSample s = gen_independent(60, 77);
  FeatureConfig cfg;
  cfg.measures.rng_seed = 10;
  cfg.perms.rng_seed = 20;
  const FeatureRecord a = featurize(s, 1, cfg);
  const FeatureRecord b = featurize(s, 1, cfg);
  CHECK(a.image == b.image);
  CHECK(a.indicators == b.indicators);
  CHECK(a.n == 60);
  CHECK(a.label == 1);
}

TEST_CASE("features are margin-free: transformed samples featurize identically") {
  Rng rng(2024);
  FeatureConfig cfg;
  cfg.measures.rng_seed = 5;
  cfg.perms.rng_seed = 6;
  for (int rep = 0; rep < 3; ++rep) {
    BivariateSample s;
    for (int k = 0; k < 30; ++k) {
      s.z1.push_back(rng.normal());
      s.z2.push_back(rng.normal());
    }
    BivariateSample t;
    for (int k = 0; k < 30; ++k) {
      t.z1.push_back(std::exp(s.z1[k]));
      t.z2.push_back(s.z2[k] * s.z2[k] * s.z2[k]);
    }
    const FeatureRecord a = featurize(s, 0, cfg);
    const FeatureRecord b = featurize(t, 0, cfg);
    REQUIRE(a.indicators == b.indicators);
    REQUIRE(a.image == b.image);
  }
}
