#pragma once

// Brute-force reference implementations used only by tests. Each one follows
// the defining formula as literally as possible, independent of the library's
// computation paths.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "deeptest/core.hpp"

namespace oracle {

using deeptest::PseudoSample;

// Hoeffding's D by direct evaluation of the combinatorial sums.
inline double hoeffding_d(const PseudoSample& ps) {
  const int n = static_cast<int>(ps.size());
  double d1 = 0;
  double d2 = 0;
  double d3 = 0;
  for (int k = 0; k < n; ++k) {
    double q = 0;
    for (int l = 0; l < n; ++l)
      if (ps.ranks_u[l] < ps.ranks_u[k] && ps.ranks_v[l] < ps.ranks_v[k]) q += 1;
    const double r1 = ps.ranks_u[k];
    const double r2 = ps.ranks_v[k];
    d1 += q * (q - 1);
    d2 += (r1 - 1) * (r1 - 2) * (r2 - 1) * (r2 - 2);
    d3 += (r1 - 2) * (r2 - 2) * q;
  }
  const double nn = n;
  return 30.0 * ((nn - 2) * (nn - 3) * d1 + d2 - 2 * (nn - 2) * d3) /
         (nn * (nn - 1) * (nn - 2) * (nn - 3) * (nn - 4));
}

// Nearest-neighbour Bhattacharyya affinity and the squared-Hellinger feature.
inline double hellinger_feature(const PseudoSample& ps) {
  const int n = static_cast<int>(ps.size());
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int l = 0; l < n; ++l) {
      if (l == k) continue;
      const double du = ps.ranks_u[k] - ps.ranks_u[l];
      const double dv = ps.ranks_v[k] - ps.ranks_v[l];
      best = std::min(best, std::sqrt(du * du + dv * dv));
    }
    total += best;
  }
  const double nn = n;
  const double b = 2.0 * std::sqrt(nn - 1.0) / (nn * (nn + 1.0)) * total;
  return 1.0 - b;
}

inline double auk(const PseudoSample& ps) {
  const int n = static_cast<int>(ps.size());
  int hits = 0;
  for (int k = 0; k < n; ++k) {
    long long joint = 0;
    for (int l = 0; l < n; ++l)
      if (ps.ranks_u[l] <= ps.ranks_u[k] && ps.ranks_v[l] <= ps.ranks_v[k]) ++joint;
    if (static_cast<long long>(ps.ranks_u[k]) * ps.ranks_v[k] < static_cast<long long>(n + 1) * joint)
      ++hits;
  }
  return static_cast<double>(hits) / n;
}

inline std::vector<std::vector<double>> double_center(const std::vector<std::vector<double>>& a) {
  const std::size_t n = a.size();
  std::vector<double> rm(n, 0.0);
  std::vector<double> cm(n, 0.0);
  double g = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      rm[k] += a[k][l];
      cm[l] += a[k][l];
      g += a[k][l];
    }
  for (auto& x : rm) x /= static_cast<double>(n);
  for (auto& x : cm) x /= static_cast<double>(n);
  g /= static_cast<double>(n) * static_cast<double>(n);
  std::vector<std::vector<double>> out(n, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) out[k][l] = a[k][l] - rm[k] - cm[l] + g;
  return out;
}

inline double dcor(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  std::vector<std::vector<double>> b(n, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      a[k][l] = std::abs(ps.u[k] - ps.u[l]);
      b[k][l] = std::abs(ps.v[k] - ps.v[l]);
    }
  const auto ac = double_center(a);
  const auto bc = double_center(b);
  double sab = 0;
  double saa = 0;
  double sbb = 0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      sab += ac[k][l] * bc[k][l];
      saa += ac[k][l] * ac[k][l];
      sbb += bc[k][l] * bc[k][l];
    }
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  return std::sqrt(std::max(0.0, sab / n2)) /
         std::sqrt(std::sqrt(saa / n2) * std::sqrt(sbb / n2));
}

inline double mdc_one(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  std::vector<std::vector<double>> b(n, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      a[k][l] = std::abs(x[k] - x[l]);
      b[k][l] = y[k] * y[l];
    }
  const auto ac = double_center(a);
  const auto bc = double_center(b);
  double mdd = 0;
  double saa = 0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      mdd += ac[k][l] * bc[k][l];
      saa += ac[k][l] * ac[k][l];
    }
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  mdd = -mdd / n2;
  double mean = 0;
  for (const double v : y) mean += v;
  mean /= static_cast<double>(n);
  double var = 0;
  for (const double v : y) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  return mdd / (sd * std::sqrt(std::sqrt(saa / n2)));
}

inline double mdc(const PseudoSample& ps) {
  return 0.5 * (mdc_one(ps.u, ps.v) + mdc_one(ps.v, ps.u));
}

inline double hsic(const PseudoSample& ps) {
  const std::size_t n = ps.size();
  auto bandwidth = [&](const std::vector<double>& x) {
    std::vector<double> sq;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = k + 1; l < n; ++l) sq.push_back((x[k] - x[l]) * (x[k] - x[l]));
    std::sort(sq.begin(), sq.end());
    const std::size_t m = sq.size();
    const double med = m % 2 == 1 ? sq[m / 2] : 0.5 * (sq[m / 2 - 1] + sq[m / 2]);
    return std::sqrt(0.5 * med);
  };
  const double s1 = bandwidth(ps.u);
  const double s2 = bandwidth(ps.v);
  const double amp = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  std::vector<std::vector<double>> k1(n, std::vector<double>(n));
  std::vector<std::vector<double>> k2(n, std::vector<double>(n));
  std::vector<std::vector<double>> h(n, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      k1[k][l] = amp * std::exp(-(ps.u[k] - ps.u[l]) * (ps.u[k] - ps.u[l]) / (2 * s1 * s1));
      k2[k][l] = amp * std::exp(-(ps.v[k] - ps.v[l]) * (ps.v[k] - ps.v[l]) / (2 * s2 * s2));
      h[k][l] = (k == l ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
    }
  auto matmul = [n](const std::vector<std::vector<double>>& a,
                    const std::vector<std::vector<double>>& b) {
    std::vector<std::vector<double>> c(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
  };
  const auto prod = matmul(matmul(matmul(k1, h), k2), h);
  double trace = 0;
  for (std::size_t i = 0; i < n; ++i) trace += prod[i][i];
  const double nn = static_cast<double>(n);
  return trace / ((nn - 1.0) * (nn - 1.0));
}

// HHG by exhaustive enumeration of the third index.
struct HhgOracle {
  double chi2_sum = 0, lik_sum = 0, chi2_max = 0, lik_max = 0;
};

inline HhgOracle hhg(const PseudoSample& ps) {
  const int n = static_cast<int>(ps.size());
  HhgOracle out;
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      if (l == k) continue;
      int a00 = 0;
      int a01 = 0;
      int a10 = 0;
      int a11 = 0;
      const int dx = std::abs(ps.ranks_u[k] - ps.ranks_u[l]);
      const int dy = std::abs(ps.ranks_v[k] - ps.ranks_v[l]);
      for (int m = 0; m < n; ++m) {
        if (m == k || m == l) continue;
        const bool xclose = std::abs(ps.ranks_u[k] - ps.ranks_u[m]) <= dx;
        const bool yclose = std::abs(ps.ranks_v[k] - ps.ranks_v[m]) <= dy;
        if (xclose && yclose) ++a00;
        else if (xclose) ++a01;
        else if (yclose) ++a10;
        else ++a11;
      }
      const int r0 = a00 + a01, r1 = a10 + a11, c0 = a00 + a10, c1 = a01 + a11;
      if (r0 == 0 || r1 == 0 || c0 == 0 || c1 == 0) continue;
      const double m2 = n - 2;
      const double det = static_cast<double>(a00) * a11 - static_cast<double>(a01) * a10;
      const double chi = m2 * det * det / (static_cast<double>(r0) * r1 * c0 * c1);
      double g = 0;
      const int cells[2][2] = {{a00, a01}, {a10, a11}};
      const int rows[2] = {r0, r1};
      const int cols[2] = {c0, c1};
      for (int q = 0; q < 2; ++q)
        for (int r = 0; r < 2; ++r)
          if (cells[q][r] > 0)
            g += 2.0 * cells[q][r] *
                 std::log(cells[q][r] * m2 / (static_cast<double>(rows[q]) * cols[r]));
      out.chi2_sum += chi;
      out.lik_sum += g;
      out.chi2_max = std::max(out.chi2_max, chi);
      out.lik_max = std::max(out.lik_max, g);
    }
  }
  return out;
}

// AUC by explicit pair counting with half-credit for ties.
inline double auc_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] == 1 && labels[j] == 0) {
        pairs += 1;
        if (scores[i] > scores[j]) wins += 1;
        else if (scores[i] == scores[j]) wins += 0.5;
      }
    }
  return wins / pairs;
}

}  // namespace oracle
