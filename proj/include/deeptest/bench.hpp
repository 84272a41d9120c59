#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deeptest/calibrate.hpp"
#include "deeptest/dgp.hpp"
#include "deeptest/errors.hpp"
#include "deeptest/features.hpp"
#include "deeptest/parallel.hpp"

namespace deeptest {

// One column of the power benchmark: a deep test or an indicator test.
struct Procedure {
  StatisticId stat;
  const NetworkModel* model = nullptr;  // required when stat.deep

  std::string name() const { return stat.name(); }
};

struct PowerRow {
  std::string model;  // generator label, e.g. "diamond" or "laplace-A"
  int n = 0;
  std::vector<double> power;  // one entry per procedure
};

struct PowerSummary {
  int n = 0;
  std::vector<double> avg_power;
  std::vector<double> avg_gap;
  std::vector<double> max_gap;
};

struct PowerTable {
  std::vector<std::string> methods;
  std::vector<PowerRow> rows;
  std::vector<PowerSummary> summaries;
  int reps = 0;
  double alpha = 0.0;
};

struct GapMetrics {
  std::vector<double> avg_gap;
  std::vector<double> max_gap;
};

// gap(model, method) = best power in the row minus the method's power;
// averaged and maximized over models.
inline GapMetrics gap_metrics(const std::vector<std::vector<double>>& powers) {
  if (powers.empty() || powers.front().empty())
    throw InvalidInputError("gap_metrics: empty power matrix");
  const std::size_t methods = powers.front().size();
  GapMetrics g;
  g.avg_gap.assign(methods, 0.0);
  g.max_gap.assign(methods, 0.0);
  for (const auto& row : powers) {
    if (row.size() != methods) throw InvalidInputError("gap_metrics: ragged power matrix");
    const double best = *std::max_element(row.begin(), row.end());
    for (std::size_t m = 0; m < methods; ++m) {
      const double gap = best - row[m];
      g.avg_gap[m] += gap;
      g.max_gap[m] = std::max(g.max_gap[m], gap);
    }
  }
  for (double& x : g.avg_gap) x /= static_cast<double>(powers.size());
  return g;
}

namespace detail {

// Noise-class mixture for the training-family generators: the first 60% of
// replicates use class 1, then 20% class 2, 20% class 3.
inline NoiseClass mixture_class(int rep, int reps) {
  if (rep * 10 < reps * 6) return NoiseClass::L1;
  if (rep * 10 < reps * 8) return NoiseClass::L2;
  return NoiseClass::L3;
}

struct PreparedProcedure {
  const Procedure* proc;
  double d_alpha = 0.0;
};

inline std::vector<PreparedProcedure> prepare(const std::vector<Procedure>& procs,
                                              const CalibrationTable& table, int n, double alpha) {
  std::vector<PreparedProcedure> out;
  out.reserve(procs.size());
  for (const auto& p : procs) {
    const CalibrationEntry* e = table.find(p.name(), n, alpha);
    if (!e)
      throw CalibrationMissingError("no calibration for " + p.name() + " at n=" + std::to_string(n) +
                                    ", alpha=" + std::to_string(alpha));
    if (p.stat.deep) {
      if (p.model == nullptr) throw InvalidInputError("deep procedure without a model");
      if (e->model_hash != model_weight_hash(*p.model))
        throw CalibrationMissingError("calibration for " + p.name() + " matches a different model");
    }
    out.push_back({&p, e->d_alpha});
  }
  return out;
}

// Rejections of every procedure on `reps` seeded samples from one generator
// row. Samples are shared across procedures (paired comparison).
inline std::vector<double> row_power(const std::string& label, const GenSpec& tmpl,
                                     const std::vector<PreparedProcedure>& procs, int reps,
                                     std::uint64_t seed, const FeatureConfig& base_cfg, int threads) {
  const std::size_t np = procs.size();
  std::vector<std::uint8_t> reject(static_cast<std::size_t>(reps) * np, 0);
  const bool training_family =
      static_cast<int>(tmpl.model) >= 1 && static_cast<int>(tmpl.model) <= 20;
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t rep) {
    GenSpec spec = tmpl;
    if (training_family && !spec.noise_class)
      spec.noise_class = mixture_class(static_cast<int>(rep), reps);
    spec.seed = split_seed(seed, label, static_cast<std::uint64_t>(tmpl.n), rep);
    const BivariateSample sample = gen_model(spec);
    FeatureConfig cfg = base_cfg;
    cfg.measures.rng_seed = split_seed(spec.seed, "feat-measures");
    cfg.perms.rng_seed = split_seed(spec.seed, "feat-perms");
    const FeatureRecord rec = featurize(sample, 1, cfg);
    for (std::size_t pi = 0; pi < np; ++pi) {
      const auto& pp = procs[pi];
      double value;
      if (pp.proc->stat.deep) {
        value = model_score(*pp.proc->model, rec);
      } else {
        value = calibration_scale(pp.proc->stat,
                                  rec.indicators[static_cast<std::size_t>(pp.proc->stat.indicator)]);
      }
      reject[rep * np + pi] = value > pp.d_alpha;
    }
  });
  std::vector<double> power(np, 0.0);
  for (int rep = 0; rep < reps; ++rep)
    for (std::size_t pi = 0; pi < np; ++pi)
      power[pi] += reject[static_cast<std::size_t>(rep) * np + pi];
  for (double& p : power) p /= static_cast<double>(reps);
  return power;
}

}  // namespace detail

// Monte-Carlo power of one procedure against one generator template.
inline double estimate_power(const Procedure& proc, const GenSpec& tmpl, int reps, double alpha,
                             const CalibrationTable& table, std::uint64_t seed,
                             const FeatureConfig& cfg = {}, int threads = 1) {
  if (reps < 1) throw InvalidInputError("estimate_power: reps must be >= 1");
  const std::vector<Procedure> procs = {proc};
  const auto prepared = detail::prepare(procs, table, tmpl.n, alpha);
  return detail::row_power(model_name(tmpl.model), tmpl, prepared, reps, seed, cfg, threads)[0];
}

enum class Experiment { Exp1, Exp2 };

// Experiment 1: the 20 training-family models in test-role parameterization.
// Experiment 2: the four held-out models and the two image generators, each
// under both variants.
inline PowerTable run_experiment(Experiment which, const std::vector<int>& sizes, int reps,
                                 double alpha, const std::vector<Procedure>& procs,
                                 const CalibrationTable& table, std::uint64_t seed,
                                 const FeatureConfig& cfg = {}, int threads = 1) {
  if (reps < 1) throw InvalidInputError("run_experiment: reps must be >= 1");
  if (sizes.empty()) throw InvalidInputError("run_experiment: no sizes");
  PowerTable out;
  out.reps = reps;
  out.alpha = alpha;
  for (const auto& p : procs) out.methods.push_back(p.name());

  struct RowSpec {
    std::string label;
    GenSpec tmpl;
  };
  std::vector<RowSpec> row_specs;
  if (which == Experiment::Exp1) {
    for (int m = 1; m <= 20; ++m) {
      RowSpec r;
      r.tmpl.model = static_cast<ModelId>(m);
      r.tmpl.role = Role::Test;
      r.label = model_name(r.tmpl.model);
      row_specs.push_back(r);
    }
  } else {
    for (int m = 21; m <= 26; ++m) {
      for (const Variant v : {Variant::A, Variant::B}) {
        RowSpec r;
        r.tmpl.model = static_cast<ModelId>(m);
        r.tmpl.role = Role::Test;
        r.tmpl.variant = v;
        r.label = std::string(model_name(r.tmpl.model)) + (v == Variant::A ? "-A" : "-B");
        row_specs.push_back(r);
      }
    }
  }

  for (const int n : sizes) {
    const auto prepared = detail::prepare(procs, table, n, alpha);
    for (const auto& rs : row_specs) {
      GenSpec tmpl = rs.tmpl;
      tmpl.n = n;
      PowerRow row;
      row.model = rs.label;
      row.n = n;
      row.power = detail::row_power(rs.label, tmpl, prepared, reps, seed, cfg, threads);
      out.rows.push_back(std::move(row));
    }
    // summary block for this size
    std::vector<std::vector<double>> block;
    for (const auto& r : out.rows)
      if (r.n == n) block.push_back(r.power);
    PowerSummary s;
    s.n = n;
    s.avg_power.assign(procs.size(), 0.0);
    for (const auto& r : block)
      for (std::size_t m = 0; m < r.size(); ++m) s.avg_power[m] += r[m];
    for (double& x : s.avg_power) x /= static_cast<double>(block.size());
    const GapMetrics g = gap_metrics(block);
    s.avg_gap = g.avg_gap;
    s.max_gap = g.max_gap;
    out.summaries.push_back(std::move(s));
  }
  return out;
}

}  // namespace deeptest
