#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "deeptest/core.hpp"
#include "deeptest/dgp.hpp"
#include "deeptest/errors.hpp"
#include "deeptest/features.hpp"
#include "deeptest/nn.hpp"
#include "deeptest/parallel.hpp"
#include "deeptest/rng.hpp"

namespace deeptest {

// A calibratable statistic: one of the 19 indicator features, or the score
// of a trained network ("deep-" + architecture tag).
struct StatisticId {
  bool deep = false;
  Indicator indicator = Indicator::Spearman;
  ArchitectureTag arch = ArchitectureTag::AllMlp;

  std::string name() const {
    if (deep) return std::string("deep-") + architecture_name(arch);
    return indicator_names()[static_cast<std::size_t>(indicator)];
  }

  static StatisticId from_name(const std::string& s) {
    StatisticId id;
    if (s.rfind("deep-", 0) == 0) {
      id.deep = true;
      id.arch = architecture_from_name(s.substr(5));
      return id;
    }
    for (int i = 0; i < kIndicatorCount - 1; ++i) {
      if (s == indicator_names()[static_cast<std::size_t>(i)]) {
        id.indicator = static_cast<Indicator>(i);
        return id;
      }
    }
    throw InvalidInputError("unknown statistic: " + s);
  }
};

inline std::vector<StatisticId> all_indicator_statistics() {
  std::vector<StatisticId> out;
  for (int i = 0; i < kIndicatorCount - 1; ++i) {  // sample size is not a statistic
    StatisticId id;
    id.indicator = static_cast<Indicator>(i);
    out.push_back(id);
  }
  return out;
}

// Signed concordance measures are calibrated on their absolute value, making
// the single-indicator tests two-sided; everything else uses the right tail.
inline bool two_sided(Indicator which) {
  return which == Indicator::Spearman || which == Indicator::Kendall ||
         which == Indicator::Blomqvist;
}

inline double calibration_scale(const StatisticId& id, double raw) {
  if (!id.deep && two_sided(id.indicator)) return std::abs(raw);
  return raw;
}

struct CalibrationEntry {
  double d_alpha = 0.0;
  int n_prime = 0;
  std::uint64_t seed = 0;
  std::uint64_t model_hash = 0;  // nonzero for deep statistics
};

struct CalibrationTable {
  // (statistic name, n, alpha) -> entry
  std::map<std::tuple<std::string, int, double>, CalibrationEntry> entries;

  const CalibrationEntry* find(const std::string& stat, int n, double alpha) const {
    const auto it = entries.find({stat, n, alpha});
    return it == entries.end() ? nullptr : &it->second;
  }
};

// The smallest observed value d with #(scores > d)/N' <= alpha: the
// ceil((1-alpha)N')-th order statistic.
inline double critical_value(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw InvalidInputError("critical_value: no scores");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInputError("critical_value: alpha must be in (0,1)");
  const auto np = static_cast<double>(scores.size());
  auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * np));
  k = std::min(std::max<std::size_t>(k, 1), scores.size());
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k - 1), scores.end());
  return scores[k - 1];
}

namespace detail {

// Per-null-sample feature seeds, derived from the calibration seed and the
// sample index so tables are reproducible bitwise.
inline FeatureConfig null_feature_config(std::uint64_t seed, std::uint64_t index,
                                         const FeatureConfig& base) {
  FeatureConfig cfg = base;
  cfg.measures.rng_seed = split_seed(seed, "null-feat", index);
  cfg.perms.rng_seed = split_seed(seed, "null-perm", index);
  return cfg;
}

}  // namespace detail

// Value of one indicator statistic on a pseudo-sample.
inline double indicator_value(const PseudoSample& ps, Indicator which, const FeatureConfig& cfg) {
  switch (which) {
    case Indicator::Spearman: return spearman(ps);
    case Indicator::Kendall: return kendall(ps);
    case Indicator::Blomqvist: return blomqvist(ps);
    case Indicator::Auk: return auk(ps);
    case Indicator::Hoeffding: return hoeffding_d(ps);
    case Indicator::Hellinger: return hellinger(ps);
    case Indicator::LinfootMi: return linfoot_mi(ps, cfg.measures);
    case Indicator::Mic: return mic(ps, cfg.measures);
    case Indicator::Ace: return ace_maxcor(ps, cfg.measures);
    case Indicator::Rdc: return rdc(ps, cfg.measures);
    case Indicator::Dcor: return copula_dcor(ps);
    case Indicator::Mdc: return copula_mdc(ps);
    case Indicator::Hsic: return copula_hsic(ps);
    case Indicator::HhgChi2Sum:
    case Indicator::HhgLikSum:
    case Indicator::HhgChi2Max:
    case Indicator::HhgLikMax:
    case Indicator::DdrV:
    case Indicator::DdrS2: {
      const auto omp = perm_one_minus_pvalues(ps, cfg.perms);
      return omp[static_cast<std::size_t>(which) - static_cast<std::size_t>(Indicator::HhgChi2Sum)];
    }
    case Indicator::SampleSize: return static_cast<double>(ps.size());
  }
  throw InvalidInputError("indicator_value: bad indicator");
}

// Network input from a feature record. The stored vector keeps the raw
// sample size as its last entry; the network sees log(n) there so that one
// coordinate does not dwarf the unit-scale indicators.
inline Example example_from_record(const FeatureRecord& rec, ArchitectureTag tag) {
  Example ex;
  if (tag != ArchitectureTag::AllMlp) ex.image.assign(rec.image.begin(), rec.image.end());
  if (tag != ArchitectureTag::AllCnn) {
    ex.indicators.assign(rec.indicators.begin(), rec.indicators.end());
    ex.indicators.back() = std::log(ex.indicators.back());
  }
  ex.label = rec.label;
  return ex;
}

// Deep-test score of a sample through a trained model.
inline double model_score(const NetworkModel& model, const FeatureRecord& rec) {
  return forward(model, example_from_record(rec, model.tag), Mode::Infer);
}

// Null-calibration scores for one statistic: the raw statistic evaluated on
// n_prime seeded bivariate-uniform samples of size n. Signed measures keep
// their sign here; calibration maps them through calibration_scale().
inline std::vector<double> null_scores(const StatisticId& stat, int n, int n_prime,
                                       std::uint64_t seed, const NetworkModel* model = nullptr,
                                       const FeatureConfig& base_cfg = {}, int threads = 1) {
  if (n_prime < 1) throw InvalidInputError("null_scores: n_prime must be >= 1");
  if (stat.deep && model == nullptr) throw InvalidInputError("null_scores: deep statistic needs a model");
  std::vector<double> scores(static_cast<std::size_t>(n_prime));
  parallel_for(static_cast<std::size_t>(n_prime), threads, [&](std::size_t i) {
    const BivariateSample s = gen_independent(n, split_seed(seed, "null", i));
    const FeatureConfig cfg = detail::null_feature_config(seed, i, base_cfg);
    if (stat.deep) {
      const FeatureRecord rec = featurize(s, 0, cfg);
      scores[i] = model_score(*model, rec);
    } else {
      const PseudoSample ps = to_pseudo(s);
      scores[i] = indicator_value(ps, stat.indicator, cfg);
    }
  });
  return scores;
}

// critical_value over the calibration-scale transform of raw null scores.
inline double calibrated_critical_value(const StatisticId& stat, std::vector<double> raw_scores,
                                        double alpha) {
  for (double& x : raw_scores) x = calibration_scale(stat, x);
  return critical_value(std::move(raw_scores), alpha);
}

// Calibrates many statistics over several sample sizes in one shared pass:
// each null sample is featurized once and scored for every requested
// statistic. <name, model> pairs identify the deep statistics.
struct DeepStatistic {
  StatisticId id;
  const NetworkModel* model = nullptr;
};

inline CalibrationTable calibrate_statistics(const std::vector<StatisticId>& indicator_stats,
                                             const std::vector<DeepStatistic>& deep_stats,
                                             const std::vector<int>& sizes, double alpha,
                                             int n_prime, std::uint64_t seed,
                                             const FeatureConfig& base_cfg = {}, int threads = 1) {
  if (n_prime < 1) throw InvalidInputError("calibrate_statistics: n_prime must be >= 1");
  CalibrationTable table;
  const std::size_t n_ind = indicator_stats.size();
  const std::size_t n_deep = deep_stats.size();
  const std::size_t n_stats = n_ind + n_deep;
  if (n_stats == 0) throw InvalidInputError("calibrate_statistics: nothing to calibrate");
  const bool need_full_vector = n_ind + n_deep > 1 || n_deep > 0;

  for (const int n : sizes) {
    const std::uint64_t size_seed = split_seed(seed, "calibrate", static_cast<std::uint64_t>(n));
    std::vector<std::vector<double>> scores(n_stats,
                                            std::vector<double>(static_cast<std::size_t>(n_prime)));
    parallel_for(static_cast<std::size_t>(n_prime), threads, [&](std::size_t i) {
      const BivariateSample s = gen_independent(n, split_seed(size_seed, "null", i));
      const FeatureConfig cfg = detail::null_feature_config(size_seed, i, base_cfg);
      if (need_full_vector) {
        const FeatureRecord rec = featurize(s, 0, cfg);
        for (std::size_t si = 0; si < n_ind; ++si)
          scores[si][i] = calibration_scale(
              indicator_stats[si],
              rec.indicators[static_cast<std::size_t>(indicator_stats[si].indicator)]);
        for (std::size_t di = 0; di < n_deep; ++di)
          scores[n_ind + di][i] = model_score(*deep_stats[di].model, rec);
      } else {
        const PseudoSample ps = to_pseudo(s);
        scores[0][i] =
            calibration_scale(indicator_stats[0], indicator_value(ps, indicator_stats[0].indicator, cfg));
      }
    });
    for (std::size_t si = 0; si < n_stats; ++si) {
      CalibrationEntry e;
      e.d_alpha = critical_value(scores[si], alpha);
      e.n_prime = n_prime;
      e.seed = seed;
      const std::string name =
          si < n_ind ? indicator_stats[si].name() : deep_stats[si - n_ind].id.name();
      if (si >= n_ind) e.model_hash = model_weight_hash(*deep_stats[si - n_ind].model);
      table.entries[{name, n, alpha}] = e;
    }
  }
  return table;
}

struct TestDecision {
  double statistic = 0.0;  // raw statistic (deep score, or signed indicator)
  double d_alpha = 0.0;
  bool reject = false;
};

struct OnTheFly {
  int n_prime = 0;
  std::uint64_t seed = 0;
};

// Rejection rule: score > d_alpha, with d_alpha from the table entry for
// (statistic, n, alpha). Never trains or calibrates implicitly unless an
// explicit on-the-fly budget is passed.
inline TestDecision deep_test(const BivariateSample& sample, const NetworkModel& model,
                              const CalibrationTable& table, double alpha,
                              const FeatureConfig& cfg = {},
                              std::optional<OnTheFly> fly = std::nullopt, int threads = 1) {
  StatisticId id;
  id.deep = true;
  id.arch = model.tag;
  const int n = static_cast<int>(sample.size());
  const CalibrationEntry* entry = table.find(id.name(), n, alpha);
  CalibrationEntry local;
  if (entry && entry->model_hash != model_weight_hash(model))
    throw CalibrationMissingError("calibration entry for " + id.name() +
                                  " was built for a different model");
  if (!entry) {
    if (!fly)
      throw CalibrationMissingError("no calibration for " + id.name() + " at n=" + std::to_string(n) +
                                    ", alpha=" + std::to_string(alpha));
    local.d_alpha =
        calibrated_critical_value(id, null_scores(id, n, fly->n_prime, fly->seed, &model, cfg, threads), alpha);
    entry = &local;
  }
  const FeatureRecord rec = featurize(sample, 0, cfg);
  TestDecision d;
  d.statistic = model_score(model, rec);
  d.d_alpha = entry->d_alpha;
  d.reject = d.statistic > d.d_alpha;
  return d;
}

inline TestDecision indicator_test(const BivariateSample& sample, Indicator which,
                                   const CalibrationTable& table, double alpha,
                                   const FeatureConfig& cfg = {},
                                   std::optional<OnTheFly> fly = std::nullopt, int threads = 1) {
  StatisticId id;
  id.indicator = which;
  const int n = static_cast<int>(sample.size());
  const CalibrationEntry* entry = table.find(id.name(), n, alpha);
  CalibrationEntry local;
  if (!entry) {
    if (!fly)
      throw CalibrationMissingError("no calibration for " + id.name() + " at n=" + std::to_string(n) +
                                    ", alpha=" + std::to_string(alpha));
    local.d_alpha =
        calibrated_critical_value(id, null_scores(id, n, fly->n_prime, fly->seed, nullptr, cfg, threads), alpha);
    entry = &local;
  }
  const PseudoSample ps = to_pseudo(sample);
  TestDecision d;
  d.statistic = indicator_value(ps, which, cfg);
  d.d_alpha = entry->d_alpha;
  d.reject = calibration_scale(id, d.statistic) > d.d_alpha;
  return d;
}

}  // namespace deeptest
