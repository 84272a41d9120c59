#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "deeptest/core.hpp"
#include "deeptest/errors.hpp"
#include "deeptest/numeric.hpp"
#include "deeptest/rng.hpp"

namespace deeptest {

// Knobs for the estimator-backed measures. Defaults follow the references
// the measures come from; rdc_* are the published choices (d=2, P=10, s=0.5).
struct MeasureConfig {
  int mi_neighbors = 3;
  int mic_grid_cap = 15;
  int ace_max_iter = 100;
  double ace_tol = 1e-6;
  int rdc_projections = 10;
  int rdc_dim = 2;
  double rdc_sigma = 0.5;
  std::uint64_t rng_seed = 0;
};

namespace detail {

// Fenwick tree over 1..n for rank prefix counts.
class BitCounter {
 public:
  explicit BitCounter(int n) : tree_(static_cast<std::size_t>(n) + 1, 0) {}
  void add(int i) {
    for (; i < static_cast<int>(tree_.size()); i += i & (-i)) ++tree_[static_cast<std::size_t>(i)];
  }
  int prefix(int i) const {
    int s = 0;
    for (; i > 0; i -= i & (-i)) s += tree_[static_cast<std::size_t>(i)];
    return s;
  }

 private:
  std::vector<int> tree_;
};

inline std::int64_t merge_count_inversions(std::vector<int>& a, std::vector<int>& tmp, std::size_t lo,
                                            std::size_t hi) {
  if (hi - lo <= 1) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = merge_count_inversions(a, tmp, lo, mid) + merge_count_inversions(a, tmp, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (a[i] <= a[j]) {
      tmp[k++] = a[i++];
    } else {
      inv += static_cast<std::int64_t>(mid - i);
      tmp[k++] = a[j++];
    }
  }
  while (i < mid) tmp[k++] = a[i++];
  while (j < hi) tmp[k++] = a[j++];
  std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo), tmp.begin() + static_cast<std::ptrdiff_t>(hi),
            a.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

// Row means and grand mean of the pairwise |x_k - x_l| matrix.
struct DistanceMeans {
  std::vector<double> row;
  double grand = 0.0;
};

inline DistanceMeans distance_means(const std::vector<double>& x) {
  const std::size_t n = x.size();
  DistanceMeans dm;
  dm.row.resize(n);
  KahanSum g;
  for (std::size_t k = 0; k < n; ++k) {
    KahanSum rk;
    for (std::size_t l = 0; l < n; ++l) rk.add(std::abs(x[k] - x[l]));
    dm.row[k] = rk.value() / static_cast<double>(n);
    g.add(dm.row[k]);
  }
  dm.grand = g.value() / static_cast<double>(n);
  return dm;
}

inline double centered_dist(const std::vector<double>& x, const DistanceMeans& dm, std::size_t k,
                            std::size_t l) {
  return std::abs(x[k] - x[l]) - dm.row[k] - dm.row[l] + dm.grand;
}

// sqrt((1/n^2) sum A_kl^2) for the double-centered distance matrix of x.
inline double dcov_self(const std::vector<double>& x, const DistanceMeans& dm) {
  const std::size_t n = x.size();
  KahanSum s;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      const double a = centered_dist(x, dm, k, l);
      s.add(a * a);
    }
  return std::sqrt(s.value() / (static_cast<double>(n) * static_cast<double>(n)));
}

}  // namespace detail

inline double spearman(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  std::int64_t ssd = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t d = ps.ranks_u[k] - ps.ranks_v[k];
    ssd += d * d;
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * static_cast<double>(ssd) / (nn * (nn * nn - 1.0));
}

inline double kendall(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  std::vector<int> seq(n);
  for (std::size_t k = 0; k < n; ++k) seq[static_cast<std::size_t>(ps.ranks_u[k]) - 1] = ps.ranks_v[k];
  std::vector<int> tmp(n);
  const std::int64_t discordant = detail::merge_count_inversions(seq, tmp, 0, n);
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return 1.0 - 2.0 * static_cast<double>(discordant) / pairs;
}

inline double blomqvist(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  const int mid2 = static_cast<int>(n) + 1;  // compare 2*rank against n+1
  std::int64_t pos = 0;
  std::int64_t neg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const int s1 = (2 * ps.ranks_u[k] > mid2) - (2 * ps.ranks_u[k] < mid2);
    const int s2 = (2 * ps.ranks_v[k] > mid2) - (2 * ps.ranks_v[k] < mid2);
    const int p = s1 * s2;
    pos += p > 0;
    neg += p < 0;
  }
  return static_cast<double>(pos - neg) / static_cast<double>(n);
}

// Fraction of points whose rank product lies below (n+1) times the joint
// empirical count at that point.
inline double auk(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  std::vector<int> v_by_u(n);  // v-rank of the point holding u-rank i+1
  for (std::size_t k = 0; k < n; ++k) v_by_u[static_cast<std::size_t>(ps.ranks_u[k]) - 1] = ps.ranks_v[k];
  detail::BitCounter bit(static_cast<int>(n));
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int r1 = static_cast<int>(i) + 1;
    const int r2 = v_by_u[i];
    bit.add(r2);
    const std::int64_t joint = bit.prefix(r2);  // #{l : r1l <= r1, r2l <= r2}, self included
    if (static_cast<std::int64_t>(r1) * r2 < static_cast<std::int64_t>(n + 1) * joint) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

inline double hoeffding_d(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  if (n < 5) throw InsufficientSampleError("hoeffding_d: needs n >= 5");
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::int64_t q = 0;
    for (std::size_t l = 0; l < n; ++l)
      q += (ps.ranks_u[l] < ps.ranks_u[k]) && (ps.ranks_v[l] < ps.ranks_v[k]);
    const double r1 = ps.ranks_u[k];
    const double r2 = ps.ranks_v[k];
    const double qd = static_cast<double>(q);
    d1 += qd * (qd - 1.0);
    d2 += (r1 - 1.0) * (r1 - 2.0) * (r2 - 1.0) * (r2 - 2.0);
    d3 += (r1 - 2.0) * (r2 - 2.0) * qd;
  }
  const double nn = static_cast<double>(n);
  const double num = (nn - 2.0) * (nn - 3.0) * d1 + d2 - 2.0 * (nn - 2.0) * d3;
  const double den = nn * (nn - 1.0) * (nn - 2.0) * (nn - 3.0) * (nn - 4.0);
  return 30.0 * num / den;
}

// Squared-Hellinger feature: 1 - B with B the nearest-neighbour Bhattacharyya
// affinity estimate on the rank points. B is kept unclamped: the estimator
// exceeds 1 on most independent samples, and flattening that region would put
// an atom under the null right where the calibration quantile lives.
inline double hellinger(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  std::vector<double> mins(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::size_t l = 0; l < n; ++l) {
      if (l == k) continue;
      const std::int64_t du = ps.ranks_u[k] - ps.ranks_u[l];
      const std::int64_t dv = ps.ranks_v[k] - ps.ranks_v[l];
      best = std::min(best, du * du + dv * dv);
    }
    mins[k] = std::sqrt(static_cast<double>(best));
  }
  const double nn = static_cast<double>(n);
  const double b = 2.0 * std::sqrt(nn - 1.0) / (nn * (nn + 1.0)) * pairwise_sum(mins);
  return 1.0 - b;
}

namespace detail {

// Kozachenko-Leonenko entropy from k-th nearest-neighbour distances.
inline double kl_entropy_1d(std::vector<double> x, int k) {
  const std::size_t n = x.size();
  std::sort(x.begin(), x.end());
  KahanSum logsum;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = i;
    std::size_t hi = i;
    double eps = 0.0;
    for (int step = 0; step < k; ++step) {
      const double dl = lo > 0 ? x[i] - x[lo - 1] : std::numeric_limits<double>::infinity();
      const double dr = hi + 1 < n ? x[hi + 1] - x[i] : std::numeric_limits<double>::infinity();
      if (dl <= dr) {
        eps = dl;
        --lo;
      } else {
        eps = dr;
        ++hi;
      }
    }
    logsum.add(std::log(eps));
  }
  return digamma(static_cast<double>(n)) - digamma(static_cast<double>(k)) + std::log(2.0) +
         logsum.value() / static_cast<double>(n);
}

inline double kl_entropy_2d(const std::vector<double>& x, const std::vector<double>& y, int k) {
  const std::size_t n = x.size();
  std::vector<double> d2(n);
  KahanSum logsum;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      d2[j] = dx * dx + dy * dy;
    }
    d2[i] = std::numeric_limits<double>::infinity();
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    logsum.add(0.5 * std::log(d2[static_cast<std::size_t>(k - 1)]));
  }
  return digamma(static_cast<double>(n)) - digamma(static_cast<double>(k)) +
         std::log(std::numbers::pi) + 2.0 * logsum.value() / static_cast<double>(n);
}

}  // namespace detail

// Linfoot correlation sqrt(1 - exp(-2I)) with I estimated by nearest-
// neighbour entropy differences on the pseudo-observations, clamped at 0.
inline double linfoot_mi(const PseudoSample& ps, const MeasureConfig& cfg = {}) {
  const std::size_t n = ps.size();
  const int k = cfg.mi_neighbors;
  if (k < 1) throw InvalidInputError("linfoot_mi: mi_neighbors must be positive");
  if (n <= static_cast<std::size_t>(k)) throw InsufficientSampleError("linfoot_mi: needs n > mi_neighbors");
  const double h1 = detail::kl_entropy_1d(ps.u, k);
  const double h2 = detail::kl_entropy_1d(ps.v, k);
  const double h12 = detail::kl_entropy_2d(ps.u, ps.v, k);
  const double info = std::max(0.0, h1 + h2 - h12);
  return std::sqrt(1.0 - std::exp(-2.0 * info));
}

// Restricted maximal-information search over equispaced grids with
// n1*n2 <= max(grid cap, ceil(n^0.6)) cells.
inline double mic(const PseudoSample& ps, const MeasureConfig& cfg = {}) {
  const std::size_t n = ps.size();
  if (n < 4) throw InsufficientSampleError("mic: needs n >= 4");
  const int budget =
      std::max(cfg.mic_grid_cap, static_cast<int>(std::ceil(std::pow(static_cast<double>(n), 0.6))));
  double best = 0.0;
  std::vector<int> tab;
  std::vector<int> rowc;
  std::vector<int> colc;
  for (int a = 2; 2 * a <= budget; ++a) {
    for (int b = 2; a * b <= budget; ++b) {
      tab.assign(static_cast<std::size_t>(a) * static_cast<std::size_t>(b), 0);
      rowc.assign(static_cast<std::size_t>(a), 0);
      colc.assign(static_cast<std::size_t>(b), 0);
      for (std::size_t k = 0; k < n; ++k) {
        const int ia = std::min(static_cast<int>(ps.u[k] * a), a - 1);
        const int ib = std::min(static_cast<int>(ps.v[k] * b), b - 1);
        ++tab[static_cast<std::size_t>(ia) * static_cast<std::size_t>(b) + static_cast<std::size_t>(ib)];
        ++rowc[static_cast<std::size_t>(ia)];
        ++colc[static_cast<std::size_t>(ib)];
      }
      KahanSum info;
      const double nn = static_cast<double>(n);
      for (int ia = 0; ia < a; ++ia) {
        for (int ib = 0; ib < b; ++ib) {
          const int c = tab[static_cast<std::size_t>(ia) * static_cast<std::size_t>(b) +
                            static_cast<std::size_t>(ib)];
          if (c == 0) continue;
          const double p = c / nn;
          const double pr = rowc[static_cast<std::size_t>(ia)] / nn;
          const double pc = colc[static_cast<std::size_t>(ib)] / nn;
          info.add(p * std::log(p / (pr * pc)));
        }
      }
      const double val = info.value() / std::log(static_cast<double>(std::min(a, b)));
      best = std::max(best, val);
    }
  }
  return std::clamp(best, 0.0, 1.0);
}

// Alternating conditional expectations with a k-nearest-rank window smoother;
// approximates the maximum correlation over transformed coordinates.
inline double ace_maxcor(const PseudoSample& ps, const MeasureConfig& cfg = {}) {
  const std::size_t n = ps.size();
  if (n < 10) throw InsufficientSampleError("ace_maxcor: needs n >= 10");
  const std::size_t win = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 0.8) / 4.0)));

  std::vector<std::size_t> order_u(n);
  std::vector<std::size_t> order_v(n);
  for (std::size_t k = 0; k < n; ++k) {
    order_u[static_cast<std::size_t>(ps.ranks_u[k]) - 1] = k;
    order_v[static_cast<std::size_t>(ps.ranks_v[k]) - 1] = k;
  }
  auto standardize = [&](std::vector<double>& x) {
    const double m = mean_of(x);
    double sd = stddev_of(x);
    if (sd == 0.0) sd = 1.0;
    for (double& xi : x) xi = (xi - m) / sd;
  };
  // Window mean of the `win` nearest positions in sorted order.
  std::vector<double> cum(n + 1);
  auto smooth = [&](const std::vector<std::size_t>& order, const std::vector<double>& vals,
                    std::vector<double>& out) {
    cum[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + vals[order[i]];
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t lo = i >= (win - 1) / 2 ? i - (win - 1) / 2 : 0;
      lo = std::min(lo, n - win);
      out[order[i]] = (cum[lo + win] - cum[lo]) / static_cast<double>(win);
    }
  };

  std::vector<double> phi = ps.v;
  standardize(phi);
  std::vector<double> theta(n);
  double rho = 0.0;
  double prev = 0.0;
  for (int it = 0; it < cfg.ace_max_iter; ++it) {
    smooth(order_u, phi, theta);
    standardize(theta);
    smooth(order_v, theta, phi);
    standardize(phi);
    KahanSum cross;
    for (std::size_t k = 0; k < n; ++k) cross.add(theta[k] * phi[k]);
    rho = cross.value() / static_cast<double>(n);
    if (it > 0 && std::abs(rho - prev) < cfg.ace_tol) break;
    prev = rho;
  }
  return std::clamp(std::abs(rho), 0.0, 1.0);
}

// Randomised dependence coefficient: largest canonical correlation between
// sin/cos projections of the normalized ranks. Deterministic given the seed.
inline double rdc(const PseudoSample& ps, const MeasureConfig& cfg = {}) {
  const std::size_t n = ps.size();
  const int P = cfg.rdc_projections;
  const int d = cfg.rdc_dim;
  const int m = d * P;
  if (n <= static_cast<std::size_t>(m)) throw InsufficientSampleError("rdc: needs n > rdc_dim*rdc_projections");

  Rng rng(split_seed(cfg.rng_seed, "rdc"));
  auto build = [&](const std::vector<double>& x) {
    std::vector<double> w(static_cast<std::size_t>(P));
    std::vector<double> b(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) w[static_cast<std::size_t>(p)] = rng.normal(0.0, cfg.rdc_sigma);
    for (int p = 0; p < P; ++p)
      b[static_cast<std::size_t>(p)] = rng.uniform(-std::numbers::pi, std::numbers::pi);
    Eigen::MatrixXd F(static_cast<Eigen::Index>(n), m);
    for (std::size_t k = 0; k < n; ++k) {
      for (int p = 0; p < P; ++p) {
        const double t = w[static_cast<std::size_t>(p)] * x[k] + b[static_cast<std::size_t>(p)];
        F(static_cast<Eigen::Index>(k), 2 * p) = std::sin(t);
        F(static_cast<Eigen::Index>(k), 2 * p + 1) = std::cos(t);
      }
    }
    F.rowwise() -= F.colwise().mean();
    return F;
  };
  const Eigen::MatrixXd f1 = build(ps.u);
  const Eigen::MatrixXd f2 = build(ps.v);
  const double denom = static_cast<double>(n) - 1.0;
  Eigen::MatrixXd c11 = (f1.transpose() * f1) / denom;
  Eigen::MatrixXd c22 = (f2.transpose() * f2) / denom;
  const Eigen::MatrixXd c12 = (f1.transpose() * f2) / denom;
  const double ridge = 1e-9;
  c11.diagonal().array() += ridge;
  c22.diagonal().array() += ridge;
  const Eigen::LLT<Eigen::MatrixXd> l1(c11);
  const Eigen::LLT<Eigen::MatrixXd> l2(c22);
  const Eigen::MatrixXd a = l1.matrixL().solve(c12);
  const Eigen::MatrixXd mcore = l2.matrixL().solve(a.transpose()).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(mcore);
  return std::clamp(svd.singularValues()(0), 0.0, 1.0);
}

inline double copula_dcor(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  const detail::DistanceMeans du = detail::distance_means(ps.u);
  const detail::DistanceMeans dv = detail::distance_means(ps.v);
  KahanSum sab;
  KahanSum saa;
  KahanSum sbb;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      const double a = detail::centered_dist(ps.u, du, k, l);
      const double b = detail::centered_dist(ps.v, dv, k, l);
      sab.add(a * b);
      saa.add(a * a);
      sbb.add(b * b);
    }
  }
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  const double dcov12 = std::sqrt(std::max(0.0, sab.value() / n2));
  const double dcov11 = std::sqrt(saa.value() / n2);
  const double dcov22 = std::sqrt(sbb.value() / n2);
  if (dcov11 == 0.0 || dcov22 == 0.0)
    throw DegenerateInputError("copula_dcor: zero marginal distance variance");
  return std::clamp(dcov12 / std::sqrt(dcov11 * dcov22), 0.0, 1.0);
}

namespace detail {

// MDD(y|x) = -(1/n^2) sum_kl A_kl (y_k - ybar)(y_l - ybar), normalised by
// sd(y) * sqrt(dcov(x,x)).
inline double mdc_one_sided(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  const DistanceMeans dm = distance_means(x);
  const double ybar = mean_of(y);
  KahanSum outer;
  for (std::size_t k = 0; k < n; ++k) {
    KahanSum inner;
    for (std::size_t l = 0; l < n; ++l) inner.add(centered_dist(x, dm, k, l) * (y[l] - ybar));
    outer.add((y[k] - ybar) * inner.value());
  }
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  const double mdd = -outer.value() / n2;
  const double sy = stddev_of(y);
  const double dvx = dcov_self(x, dm);
  if (sy == 0.0 || dvx == 0.0) throw DegenerateInputError("copula_mdc: degenerate coordinate");
  return mdd / (sy * std::sqrt(dvx));
}

}  // namespace detail

inline double copula_mdc(const PseudoSample& ps) {
  return 0.5 * (detail::mdc_one_sided(ps.u, ps.v) + detail::mdc_one_sided(ps.v, ps.u));
}

inline double copula_hsic(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  auto bandwidth = [&](const std::vector<double>& x) {
    std::vector<double> sq;
    sq.reserve(n * (n - 1) / 2);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = k + 1; l < n; ++l) sq.push_back((x[k] - x[l]) * (x[k] - x[l]));
    const double med = median_of(std::move(sq));
    if (med == 0.0) throw DegenerateInputError("copula_hsic: zero median pairwise distance");
    return std::sqrt(0.5 * med);
  };
  const double s1 = bandwidth(ps.u);
  const double s2 = bandwidth(ps.v);
  const double amp = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  std::vector<double> k1(n * n);
  std::vector<double> k2(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      const double dx = ps.u[k] - ps.u[l];
      const double dy = ps.v[k] - ps.v[l];
      k1[k * n + l] = amp * std::exp(-dx * dx / (2.0 * s1 * s1));
      k2[k * n + l] = amp * std::exp(-dy * dy / (2.0 * s2 * s2));
    }
  }
  // trace(K1 H K2 H) expanded to avoid the matrix products.
  KahanSum t1;
  KahanSum sum1;
  KahanSum sum2;
  KahanSum cross;
  for (std::size_t k = 0; k < n; ++k) {
    KahanSum r1;
    KahanSum r2;
    for (std::size_t l = 0; l < n; ++l) {
      t1.add(k1[k * n + l] * k2[k * n + l]);
      r1.add(k1[k * n + l]);
      r2.add(k2[k * n + l]);
    }
    sum1.add(r1.value());
    sum2.add(r2.value());
    cross.add(r1.value() * r2.value());
  }
  const double nn = static_cast<double>(n);
  const double trace = t1.value() - 2.0 / nn * cross.value() + sum1.value() * sum2.value() / (nn * nn);
  return std::max(0.0, trace / ((nn - 1.0) * (nn - 1.0)));
}

}  // namespace deeptest
