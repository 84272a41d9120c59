#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

#include "deeptest/core.hpp"
#include "deeptest/errors.hpp"
#include "deeptest/indicators.hpp"
#include "deeptest/permtests.hpp"

namespace deeptest {

inline constexpr int kImageGridSize = 25;
inline constexpr int kIndicatorCount = 20;

// 25x25 histogram of the pseudo-sample, normalized by its largest count.
// Cell (i,j) covers [i/25,(i+1)/25) x [j/25,(j+1)/25); flattening (and the
// persisted layout) is column-major: index = j*25 + i.
struct ImageGrid {
  std::array<int, kImageGridSize * kImageGridSize> raw_counts{};
  std::array<double, kImageGridSize * kImageGridSize> bins{};

  int count_at(int i, int j) const { return raw_counts[static_cast<std::size_t>(j) * kImageGridSize + i]; }
  double bin_at(int i, int j) const { return bins[static_cast<std::size_t>(j) * kImageGridSize + i]; }
};

inline ImageGrid image_grid(const PseudoSample& ps) {
  if (ps.size() < 1) throw InvalidInputError("image_grid: empty sample");
  ImageGrid g;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const int i = std::min(static_cast<int>(ps.u[k] * kImageGridSize), kImageGridSize - 1);
    const int j = std::min(static_cast<int>(ps.v[k] * kImageGridSize), kImageGridSize - 1);
    ++g.raw_counts[static_cast<std::size_t>(j) * kImageGridSize + i];
  }
  const int peak = *std::max_element(g.raw_counts.begin(), g.raw_counts.end());
  for (std::size_t c = 0; c < g.raw_counts.size(); ++c)
    g.bins[c] = static_cast<double>(g.raw_counts[c]) / static_cast<double>(peak);
  return g;
}

// The 20 entries of the indicator feature vector, in frozen order. The order
// is part of the model-file contract.
enum class Indicator : int {
  Spearman = 0,
  Kendall,
  Blomqvist,
  Auk,
  Hoeffding,
  Hellinger,
  LinfootMi,
  Mic,
  Ace,
  Rdc,
  Dcor,
  Mdc,
  Hsic,
  HhgChi2Sum,
  HhgLikSum,
  HhgChi2Max,
  HhgLikMax,
  DdrV,
  DdrS2,
  SampleSize,
};

inline const std::array<const char*, kIndicatorCount>& indicator_names() {
  static const std::array<const char*, kIndicatorCount> names = {
      "spearman", "kendall",      "blomqvist",   "auk",          "hoeffding",    "hellinger",
      "linfoot",  "mic",          "ace",         "rdc",          "dcor",         "mdc",
      "hsic",     "hhg-chi2-sum", "hhg-lik-sum", "hhg-chi2-max", "hhg-lik-max",  "ddr-v",
      "ddr-s2",   "n"};
  return names;
}

struct IndicatorVector {
  std::array<double, kIndicatorCount> values{};

  double operator[](Indicator which) const { return values[static_cast<std::size_t>(which)]; }
};

struct FeatureConfig {
  MeasureConfig measures;
  PermConfig perms;
};

// 13 measures, 6 one-minus-p permutation features, and the sample size.
inline IndicatorVector indicator_vector(const PseudoSample& ps, const FeatureConfig& cfg = {}) {
  if (ps.size() < 5) throw InsufficientSampleError("indicator_vector: needs n >= 5");
  IndicatorVector iv;
  auto& x = iv.values;
  x[static_cast<std::size_t>(Indicator::Spearman)] = spearman(ps);
  x[static_cast<std::size_t>(Indicator::Kendall)] = kendall(ps);
  x[static_cast<std::size_t>(Indicator::Blomqvist)] = blomqvist(ps);
  x[static_cast<std::size_t>(Indicator::Auk)] = auk(ps);
  x[static_cast<std::size_t>(Indicator::Hoeffding)] = hoeffding_d(ps);
  x[static_cast<std::size_t>(Indicator::Hellinger)] = hellinger(ps);
  x[static_cast<std::size_t>(Indicator::LinfootMi)] = linfoot_mi(ps, cfg.measures);
  x[static_cast<std::size_t>(Indicator::Mic)] = mic(ps, cfg.measures);
  x[static_cast<std::size_t>(Indicator::Ace)] = ace_maxcor(ps, cfg.measures);
  x[static_cast<std::size_t>(Indicator::Rdc)] = rdc(ps, cfg.measures);
  x[static_cast<std::size_t>(Indicator::Dcor)] = copula_dcor(ps);
  x[static_cast<std::size_t>(Indicator::Mdc)] = copula_mdc(ps);
  x[static_cast<std::size_t>(Indicator::Hsic)] = copula_hsic(ps);
  const std::array<double, 6> omp = perm_one_minus_pvalues(ps, cfg.perms);
  for (int s = 0; s < 6; ++s)
    x[static_cast<std::size_t>(Indicator::HhgChi2Sum) + static_cast<std::size_t>(s)] =
        omp[static_cast<std::size_t>(s)];
  x[static_cast<std::size_t>(Indicator::SampleSize)] = static_cast<double>(ps.size());
  return iv;
}

// One featurized record: what training, calibration and testing consume.
struct FeatureRecord {
  int n = 0;
  std::array<double, kImageGridSize * kImageGridSize> image{};  // column-major bins
  std::array<double, kIndicatorCount> indicators{};
  int label = 0;
};

inline FeatureRecord featurize(const BivariateSample& sample, int label, const FeatureConfig& cfg) {
  const PseudoSample ps = to_pseudo(sample);
  FeatureRecord rec;
  rec.n = static_cast<int>(ps.size());
  rec.image = image_grid(ps).bins;
  rec.indicators = indicator_vector(ps, cfg).values;
  rec.label = label;
  return rec;
}

}  // namespace deeptest
