#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "deeptest/errors.hpp"

namespace deeptest {

// A bivariate sample of n paired real observations; the unit every test and
// featurizer operates on.
struct BivariateSample {
  std::vector<double> z1;
  std::vector<double> z2;

  std::size_t size() const { return z1.size(); }

  void validate() const {
    if (z1.size() != z2.size()) throw InvalidInputError("sample coordinates differ in length");
    if (z1.size() < 2) throw InvalidInputError("sample needs at least 2 observations");
    for (std::size_t k = 0; k < z1.size(); ++k) {
      if (!std::isfinite(z1[k]) || !std::isfinite(z2[k]))
        throw InvalidInputError("sample contains a non-finite value at row " + std::to_string(k + 1));
    }
  }
};

// Rank-transformed sample on (0,1)^2: u_k = rank(z1_k)/(n+1). All indicators
// consume this representation only, which is what makes them margin-free.
struct PseudoSample {
  std::vector<double> u;
  std::vector<double> v;
  std::vector<int> ranks_u;  // permutation of 1..n
  std::vector<int> ranks_v;
  bool had_ties = false;

  std::size_t size() const { return u.size(); }
};

// Ordinal ranks, 1..n. Ties are broken by input order (first occurrence gets
// the lower rank), which keeps the transform deterministic on non-continuous
// data; `had_ties` reports whether that rule fired.
inline std::vector<int> ranks(const std::vector<double>& values, bool* had_ties = nullptr) {
  const std::size_t n = values.size();
  if (n < 2) throw InvalidInputError("ranks: need at least 2 values");
  for (const double x : values) {
    if (!std::isfinite(x)) throw InvalidInputError("ranks: non-finite value");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> r(n);
  bool ties = false;
  for (std::size_t pos = 0; pos < n; ++pos) {
    r[order[pos]] = static_cast<int>(pos) + 1;
    if (pos > 0 && values[order[pos]] == values[order[pos - 1]]) ties = true;
  }
  if (had_ties) *had_ties = ties;
  return r;
}

inline PseudoSample to_pseudo(const BivariateSample& sample) {
  sample.validate();
  const std::size_t n = sample.size();
  PseudoSample ps;
  bool t1 = false;
  bool t2 = false;
  ps.ranks_u = ranks(sample.z1, &t1);
  ps.ranks_v = ranks(sample.z2, &t2);
  ps.had_ties = t1 || t2;
  ps.u.resize(n);
  ps.v.resize(n);
  const double denom = static_cast<double>(n) + 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    ps.u[k] = static_cast<double>(ps.ranks_u[k]) / denom;
    ps.v[k] = static_cast<double>(ps.ranks_v[k]) / denom;
  }
  return ps;
}

// Builds a pseudo-sample directly from two rank permutations (1..n each).
inline PseudoSample pseudo_from_ranks(std::vector<int> r1, std::vector<int> r2) {
  PseudoSample ps;
  const std::size_t n = r1.size();
  ps.ranks_u = std::move(r1);
  ps.ranks_v = std::move(r2);
  ps.u.resize(n);
  ps.v.resize(n);
  const double denom = static_cast<double>(n) + 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    ps.u[k] = static_cast<double>(ps.ranks_u[k]) / denom;
    ps.v[k] = static_cast<double>(ps.ranks_v[k]) / denom;
  }
  return ps;
}

// --- sample CSV ---------------------------------------------------------
// Two numeric columns, comma separated, optional single header line.

inline BivariateSample read_sample_csv(std::istream& in, const std::string& name) {
  BivariateSample s;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError(name + ":" + std::to_string(lineno) + ": expected two comma-separated columns");
    const std::string a = line.substr(0, comma);
    const std::string b = line.substr(comma + 1);
    try {
      std::size_t pa = 0;
      std::size_t pb = 0;
      const double x = std::stod(a, &pa);
      const double y = std::stod(b, &pb);
      while (pa < a.size() && std::isspace(static_cast<unsigned char>(a[pa]))) ++pa;
      while (pb < b.size() && std::isspace(static_cast<unsigned char>(b[pb]))) ++pb;
      if (pa != a.size() || pb != b.size()) throw std::invalid_argument("trailing junk");
      s.z1.push_back(x);
      s.z2.push_back(y);
    } catch (const std::exception&) {
      if (first) {
        first = false;  // tolerate one header line
        continue;
      }
      throw DataError(name + ":" + std::to_string(lineno) + ": cannot parse numeric row");
    }
    first = false;
  }
  if (s.z1.size() < 2) throw DataError(name + ": fewer than 2 data rows");
  s.validate();
  return s;
}

inline BivariateSample read_sample_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  return read_sample_csv(in, path);
}

inline void write_sample_csv(std::ostream& out, const BivariateSample& s) {
  out << "z1,z2\n";
  char buf[64];
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", s.z1[k], s.z2[k]);
    out << buf;
  }
}

inline void write_sample_csv(const std::string& path, const BivariateSample& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  write_sample_csv(out, s);
}

}  // namespace deeptest
