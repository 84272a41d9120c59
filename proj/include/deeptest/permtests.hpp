#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deeptest/core.hpp"
#include "deeptest/errors.hpp"
#include "deeptest/numeric.hpp"
#include "deeptest/rng.hpp"

namespace deeptest {

struct PermConfig {
  int n_permutations = 100;
  std::uint64_t rng_seed = 0;
  int ddr_dn = 10;  // cap for the data-driven order d(n)
};

// Sum and max variants of the pairwise 2x2-table statistics: chi-square form
// and likelihood-ratio (G) form.
struct HhgStatistics {
  double chi2_sum = 0.0;
  double lik_sum = 0.0;
  double chi2_max = 0.0;
  double lik_max = 0.0;
};

struct DdrStatistics {
  double t_s2 = 0.0;  // penalized-order diagonal statistic
  double t_v = 0.0;   // subset (Lambda) statistic
};

enum class PermStatistic {
  HhgChi2Sum,
  HhgLikSum,
  HhgChi2Max,
  HhgLikMax,
  DdrV,
  DdrS2,
};

namespace detail {

// Pairwise 2x2 contingency statistics over all ordered pairs (k,l), k != l.
// Distances reduce to rank windows, so each A-table comes from one lookup in
// a 2D prefix-count table over the rank grid: O(n^2) total. All G-statistic
// log arguments are integers in 1..n, served from a per-call table.
inline HhgStatistics hhg_from_ranks(const std::vector<int>& r1, const std::vector<int>& r2,
                                    std::vector<int>& prefix, std::vector<double>& log_table) {
  const int n = static_cast<int>(r1.size());
  const int w = n + 1;
  if (log_table.size() != static_cast<std::size_t>(n + 1)) {
    log_table.resize(static_cast<std::size_t>(n) + 1);
    log_table[0] = 0.0;
    for (int i = 1; i <= n; ++i) log_table[static_cast<std::size_t>(i)] = std::log(static_cast<double>(i));
  }
  prefix.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(w), 0);
  for (int k = 0; k < n; ++k)
    prefix[static_cast<std::size_t>(r1[static_cast<std::size_t>(k)]) * w +
           r2[static_cast<std::size_t>(k)]] = 1;
  for (int i = 1; i < w; ++i)
    for (int j = 1; j < w; ++j)
      prefix[static_cast<std::size_t>(i) * w + j] += prefix[static_cast<std::size_t>(i - 1) * w + j] +
                                                     prefix[static_cast<std::size_t>(i) * w + j - 1] -
                                                     prefix[static_cast<std::size_t>(i - 1) * w + j - 1];
  auto rect = [&](int ilo, int ihi, int jlo, int jhi) {
    ilo = std::max(ilo, 1);
    jlo = std::max(jlo, 1);
    ihi = std::min(ihi, n);
    jhi = std::min(jhi, n);
    return prefix[static_cast<std::size_t>(ihi) * w + jhi] -
           prefix[static_cast<std::size_t>(ilo - 1) * w + jhi] -
           prefix[static_cast<std::size_t>(ihi) * w + jlo - 1] +
           prefix[static_cast<std::size_t>(ilo - 1) * w + jlo - 1];
  };

  const double m = static_cast<double>(n) - 2.0;
  KahanSum chi_sum;
  KahanSum lik_sum;
  double chi_max = 0.0;
  double lik_max = 0.0;
  for (int k = 0; k < n; ++k) {
    const int xk = r1[static_cast<std::size_t>(k)];
    const int yk = r2[static_cast<std::size_t>(k)];
    for (int l = 0; l < n; ++l) {
      if (l == k) continue;
      const int d1 = std::abs(xk - r1[static_cast<std::size_t>(l)]);
      const int d2 = std::abs(yk - r2[static_cast<std::size_t>(l)]);
      const int a00 = rect(xk - d1, xk + d1, yk - d2, yk + d2) - 2;  // drop k and l themselves
      const int ax = std::min(n, xk + d1) - std::max(1, xk - d1) - 1;  // close in x, minus k,l
      const int ay = std::min(n, yk + d2) - std::max(1, yk - d2) - 1;
      const int a01 = ax - a00;  // close in x, far in y
      const int a10 = ay - a00;
      const int a11 = (n - 2) - a00 - a01 - a10;
      const int row0 = a00 + a01;
      const int row1 = a10 + a11;
      const int col0 = a00 + a10;
      const int col1 = a01 + a11;
      if (row0 == 0 || row1 == 0 || col0 == 0 || col1 == 0) continue;  // S = G = 0
      const double det = static_cast<double>(a00) * a11 - static_cast<double>(a01) * a10;
      const double chi = m * det * det /
                         (static_cast<double>(row0) * row1 * static_cast<double>(col0) * col1);
      // G = 2 sum O log(O(n-2)/(row col)), with 0 log 0 := 0
      const double logm = log_table[static_cast<std::size_t>(n - 2)];
      double g = 0.0;
      const std::array<std::array<int, 2>, 2> cells = {{{a00, a01}, {a10, a11}}};
      const std::array<int, 2> rows = {row0, row1};
      const std::array<int, 2> cols = {col0, col1};
      for (int q = 0; q < 2; ++q)
        for (int r = 0; r < 2; ++r) {
          const int o = cells[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)];
          if (o > 0)
            g += 2.0 * o *
                 (log_table[static_cast<std::size_t>(o)] + logm -
                  log_table[static_cast<std::size_t>(rows[static_cast<std::size_t>(q)])] -
                  log_table[static_cast<std::size_t>(cols[static_cast<std::size_t>(r)])]);
        }
      chi_sum.add(chi);
      lik_sum.add(g);
      chi_max = std::max(chi_max, chi);
      lik_max = std::max(lik_max, g);
    }
  }
  return {chi_sum.value(), lik_sum.value(), chi_max, lik_max};
}

// Orthonormal Legendre polynomials on [0,1], degrees 1..qmax, at each x.
// out(q-1, k) = L_q(x_k).
inline void legendre_matrix(const std::vector<double>& x, int qmax, std::vector<double>& out) {
  const std::size_t n = x.size();
  out.resize(static_cast<std::size_t>(qmax) * n);
  std::vector<double> p(static_cast<std::size_t>(qmax) + 1);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = 2.0 * x[k] - 1.0;
    p[0] = 1.0;
    p[1] = t;
    for (int q = 1; q < qmax; ++q)
      p[static_cast<std::size_t>(q) + 1] =
          ((2.0 * q + 1.0) * t * p[static_cast<std::size_t>(q)] - q * p[static_cast<std::size_t>(q) - 1]) /
          (q + 1.0);
    for (int q = 1; q <= qmax; ++q)
      out[static_cast<std::size_t>(q - 1) * n + k] = std::sqrt(2.0 * q + 1.0) * p[static_cast<std::size_t>(q)];
  }
}

inline int ddr_order_cap(std::size_t n, int cap) {
  return std::min(cap, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
}

inline void legendre_for_ranks(const std::vector<int>& r, int d, std::vector<double>& out) {
  const std::size_t n = r.size();
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k)
    x[k] = (static_cast<double>(r[k]) - 0.5) / static_cast<double>(n);
  legendre_matrix(x, d, out);
}

// All d x d squared cross terms t_ij = { n^{-1/2} sum_k L_i(x1k) L_j(x2k) }^2
// from precomputed Legendre value matrices.
inline void ddr_cross_terms(const std::vector<double>& lx, const std::vector<double>& ly, int d,
                            std::size_t n, std::vector<double>& t) {
  t.assign(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      KahanSum s;
      for (std::size_t k = 0; k < n; ++k)
        s.add(lx[static_cast<std::size_t>(i) * n + k] * ly[static_cast<std::size_t>(j) * n + k]);
      const double z = scale * s.value();
      t[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = z * z;
    }
}

inline void ddr_terms(const std::vector<int>& r1, const std::vector<int>& r2, int d,
                      std::vector<double>& lx, std::vector<double>& ly, std::vector<double>& t) {
  legendre_for_ranks(r1, d, lx);
  legendre_for_ranks(r2, d, ly);
  ddr_cross_terms(lx, ly, d, r1.size(), t);
}

inline DdrStatistics ddr_from_terms(const std::vector<double>& t, int d, std::size_t n) {
  const double logn = std::log(static_cast<double>(n));
  // S2: smallest Q in 1..d maximizing T_Q - Q log n over the diagonal sums.
  double tq = 0.0;
  double best_pen = -std::numeric_limits<double>::infinity();
  double t_s2 = 0.0;
  for (int q = 1; q <= d; ++q) {
    tq += t[static_cast<std::size_t>(q - 1) * static_cast<std::size_t>(d) + static_cast<std::size_t>(q - 1)];
    const double pen = tq - q * logn;
    if (pen > best_pen) {
      best_pen = pen;
      t_s2 = tq;
    }
  }
  // Lambda: rank all pairs by term value, force (1,1) first, and keep the
  // prefix whose penalized total is largest.
  std::vector<double> rest;
  rest.reserve(static_cast<std::size_t>(d) * static_cast<std::size_t>(d) - 1);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (!(i == 0 && j == 0))
        rest.push_back(t[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)]);
  std::sort(rest.begin(), rest.end(), std::greater<double>());
  double total = t[0];
  double best = total - logn;
  double t_v = total;
  double card = 1.0;
  for (const double term : rest) {
    total += term;
    card += 1.0;
    const double pen = total - card * logn;
    if (pen > best) {
      best = pen;
      t_v = total;
    }
  }
  return {t_s2, t_v};
}

}  // namespace detail

inline HhgStatistics hhg_statistics(const PseudoSample& ps) {
  if (ps.size() < 3) throw InsufficientSampleError("hhg_statistics: needs n >= 3");
  std::vector<int> scratch;
  std::vector<double> logs;
  return detail::hhg_from_ranks(ps.ranks_u, ps.ranks_v, scratch, logs);
}

inline DdrStatistics ddr_statistics(const PseudoSample& ps, const PermConfig& cfg = {}) {
  const std::size_t n = ps.size();
  if (n < 5) throw InsufficientSampleError("ddr_statistics: needs n >= 5");
  const int d = detail::ddr_order_cap(n, cfg.ddr_dn);
  std::vector<double> lx;
  std::vector<double> ly;
  std::vector<double> t;
  detail::ddr_terms(ps.ranks_u, ps.ranks_v, d, lx, ly, t);
  return detail::ddr_from_terms(t, d, n);
}

// One-minus-p-values for all six permutation statistics, sharing a single
// pool of v-rank permutations. p = (1 + #{perm >= observed}) / (M + 1).
inline std::array<double, 6> perm_one_minus_pvalues(const PseudoSample& ps, const PermConfig& cfg) {
  const std::size_t n = ps.size();
  if (n < 5) throw InsufficientSampleError("perm tests: needs n >= 5");
  if (cfg.n_permutations < 1) throw InvalidInputError("perm tests: n_permutations must be >= 1");
  const int d = detail::ddr_order_cap(n, cfg.ddr_dn);

  std::vector<int> scratch;
  std::vector<double> logs;
  std::vector<double> lx;  // u-side Legendre values are permutation-invariant
  detail::legendre_for_ranks(ps.ranks_u, d, lx);
  std::vector<double> ly;
  std::vector<double> terms;
  auto eval = [&](const std::vector<int>& r2) -> std::array<double, 6> {
    const HhgStatistics h = detail::hhg_from_ranks(ps.ranks_u, r2, scratch, logs);
    detail::legendre_for_ranks(r2, d, ly);
    detail::ddr_cross_terms(lx, ly, d, n, terms);
    const DdrStatistics dd = detail::ddr_from_terms(terms, d, n);
    return {h.chi2_sum, h.lik_sum, h.chi2_max, h.lik_max, dd.t_v, dd.t_s2};
  };

  const std::array<double, 6> observed = eval(ps.ranks_v);
  std::array<int, 6> ge_count{};
  std::vector<int> permuted = ps.ranks_v;
  for (int p = 0; p < cfg.n_permutations; ++p) {
    Rng rng(split_seed(cfg.rng_seed, "perm", static_cast<std::uint64_t>(p)));
    permuted = ps.ranks_v;
    rng.shuffle(permuted);
    const std::array<double, 6> stat = eval(permuted);
    for (int s = 0; s < 6; ++s)
      if (stat[static_cast<std::size_t>(s)] >= observed[static_cast<std::size_t>(s)])
        ++ge_count[static_cast<std::size_t>(s)];
  }
  std::array<double, 6> out{};
  for (int s = 0; s < 6; ++s) {
    const double p = (1.0 + ge_count[static_cast<std::size_t>(s)]) / (cfg.n_permutations + 1.0);
    out[static_cast<std::size_t>(s)] = 1.0 - p;
  }
  return out;
}

inline double perm_pvalue(const PseudoSample& ps, PermStatistic stat, const PermConfig& cfg) {
  const std::array<double, 6> omp = perm_one_minus_pvalues(ps, cfg);
  return 1.0 - omp[static_cast<std::size_t>(stat)];
}

}  // namespace deeptest
