#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "deeptest/core.hpp"
#include "deeptest/permtests.hpp"
#include "deeptest/rng.hpp"
#include "oracles.hpp"

using namespace deeptest;

namespace {

PseudoSample random_perm(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> r1(static_cast<std::size_t>(n));
  std::vector<int> r2(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    r1[static_cast<std::size_t>(k)] = k + 1;
    r2[static_cast<std::size_t>(k)] = k + 1;
  }
  rng.shuffle(r1);
  rng.shuffle(r2);
  return pseudo_from_ranks(r1, r2);
}

PseudoSample comonotone(int n) {
  std::vector<int> r(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) r[static_cast<std::size_t>(k)] = k + 1;
  return pseudo_from_ranks(r, r);
}

}  // namespace

TEST_CASE("hhg matches the exhaustive oracle up to n=12") {
  Rng rng(3);
  for (int n = 3; n <= 12; ++n) {
    for (int rep = 0; rep < 10; ++rep) {
      const PseudoSample ps = random_perm(n, rng.next_u64());
      const HhgStatistics got = hhg_statistics(ps);
      const oracle::HhgOracle want = oracle::hhg(ps);
      CHECK(got.chi2_sum == Catch::Approx(want.chi2_sum).margin(1e-10));
      CHECK(got.lik_sum == Catch::Approx(want.lik_sum).margin(1e-10));
      CHECK(got.chi2_max == Catch::Approx(want.chi2_max).margin(1e-10));
      CHECK(got.lik_max == Catch::Approx(want.lik_max).margin(1e-10));
      CHECK(got.chi2_sum >= 0.0);
      CHECK(got.lik_sum >= 0.0);
      CHECK(got.chi2_max <= got.chi2_sum + 1e-12);
      CHECK(got.lik_max <= got.lik_sum + 1e-12);
    }
  }
  CHECK_THROWS_AS(hhg_statistics(comonotone(2)), InsufficientSampleError);
}

TEST_CASE("hhg statistics depend only on the rank pairing pattern") {
  Rng rng(5);
  const PseudoSample ps = random_perm(25, 99);
  std::vector<std::size_t> perm(25);
  for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
  rng.shuffle(perm);
  std::vector<int> r1(25);
  std::vector<int> r2(25);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    r1[k] = ps.ranks_u[perm[k]];
    r2[k] = ps.ranks_v[perm[k]];
  }
  const HhgStatistics a = hhg_statistics(ps);
  const HhgStatistics b = hhg_statistics(pseudo_from_ranks(r1, r2));
  CHECK(a.chi2_sum == Catch::Approx(b.chi2_sum).margin(1e-12));
  CHECK(a.lik_sum == Catch::Approx(b.lik_sum).margin(1e-12));
  CHECK(a.chi2_max == b.chi2_max);
  CHECK(a.lik_max == b.lik_max);
}

TEST_CASE("hhg on dependent data dominates its permutation distribution") {
  const PseudoSample ps = comonotone(50);
  const HhgStatistics observed = hhg_statistics(ps);
  Rng rng(7);
  std::vector<double> perms;
  for (int p = 0; p < 100; ++p) {
    std::vector<int> shuffled = ps.ranks_v;
    rng.shuffle(shuffled);
    perms.push_back(hhg_statistics(pseudo_from_ranks(ps.ranks_u, shuffled)).chi2_sum);
  }
  std::nth_element(perms.begin(), perms.begin() + 50, perms.end());
  CHECK(observed.chi2_sum > perms[50]);
}

TEST_CASE("ddr first diagonal term matches the direct Legendre sum") {
  const int n = 20;
  const PseudoSample ps = comonotone(n);
  std::vector<double> lx;
  std::vector<double> ly;
  std::vector<double> terms;
  deeptest::detail::ddr_terms(ps.ranks_u, ps.ranks_v, 3, lx, ly, terms);
  double s = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double x = (k - 0.5) / n;
    const double l1 = std::sqrt(3.0) * (2.0 * x - 1.0);
    s += l1 * l1;
  }
  const double t1 = (s / std::sqrt(static_cast<double>(n))) * (s / std::sqrt(static_cast<double>(n)));
  CHECK(terms[0] == Catch::Approx(t1).margin(1e-10));
}

TEST_CASE("ddr diagonal statistic is nondecreasing in the order") {
  const PseudoSample ps = random_perm(40, 17);
  std::vector<double> lx;
  std::vector<double> ly;
  std::vector<double> terms;
  const int d = 6;
  deeptest::detail::ddr_terms(ps.ranks_u, ps.ranks_v, d, lx, ly, terms);
  double tq = 0.0;
  double prev = 0.0;
  for (int q = 0; q < d; ++q) {
    tq += terms[static_cast<std::size_t>(q) * d + static_cast<std::size_t>(q)];
    CHECK(tq >= prev);
    prev = tq;
  }
}

TEST_CASE("ddr penalized order selection picks the smallest maximizer") {
  // two orders, T = (10, 10.1), log n = 2: penalties 2 and 4, so Q = 1 wins
  std::vector<double> terms = {10.0, 0.0, 0.0, 0.1};
  const std::size_t n = static_cast<std::size_t>(std::llround(std::exp(2.0)));
  (void)n;
  const DdrStatistics d = deeptest::detail::ddr_from_terms(terms, 2, 7);  // log 7 ~= 1.946
  CHECK(d.t_s2 == 10.0);
  CHECK(d.t_v >= d.t_s2);  // lambda set always contains (1,1)
  CHECK_THROWS_AS(ddr_statistics(comonotone(4)), InsufficientSampleError);
}

TEST_CASE("perm p-values hit the extremes and the add-one floor") {
  PermConfig cfg;
  cfg.rng_seed = 11;
  // comonotone data dominate every permutation
  CHECK(perm_pvalue(comonotone(30), PermStatistic::HhgChi2Sum, cfg) ==
        Catch::Approx(1.0 / 101.0).margin(1e-15));
  const auto omp = perm_one_minus_pvalues(comonotone(30), cfg);
  for (const double v : omp) {
    CHECK(v >= 0.0);
    CHECK(v <= 100.0 / 101.0);
  }
  // determinism
  CHECK(perm_one_minus_pvalues(random_perm(20, 5), cfg) ==
        perm_one_minus_pvalues(random_perm(20, 5), cfg));
  cfg.n_permutations = 0;
  CHECK_THROWS_AS(perm_one_minus_pvalues(comonotone(30), cfg), InvalidInputError);
}

TEST_CASE("perm p-values are approximately uniform under independence") {
  PermConfig cfg;
  const int reps = 1000;
  std::vector<double> pvals;
  pvals.reserve(reps);
  for (int rep = 0; rep < reps; ++rep) {
    cfg.rng_seed = split_seed(1234, "ks", static_cast<std::uint64_t>(rep));
    const PseudoSample ps = random_perm(15, split_seed(99, "sample", static_cast<std::uint64_t>(rep)));
    pvals.push_back(1.0 - perm_one_minus_pvalues(ps, cfg)[1]);  // likelihood-sum variant
  }
  std::sort(pvals.begin(), pvals.end());
  double ks = 0.0;
  for (int i = 0; i < reps; ++i) {
    const double ecdf_hi = static_cast<double>(i + 1) / reps;
    const double ecdf_lo = static_cast<double>(i) / reps;
    ks = std::max(ks, std::max(std::abs(ecdf_hi - pvals[static_cast<std::size_t>(i)]),
                               std::abs(pvals[static_cast<std::size_t>(i)] - ecdf_lo)));
  }
  CHECK(ks < 0.06);
}
