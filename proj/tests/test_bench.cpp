#include <catch_amalgamated.hpp>

#include <cmath>

#include "deeptest/bench.hpp"
#include "paper_rows.hpp"

using namespace deeptest;

TEST_CASE("gap metrics on toy matrices") {
  // a method that is best everywhere has zero gaps
  const GapMetrics g1 = gap_metrics({{0.9, 0.5}, {0.8, 0.2}});
  CHECK(g1.avg_gap[0] == 0.0);
  CHECK(g1.max_gap[0] == 0.0);
  CHECK(g1.avg_gap[1] == Catch::Approx(0.5));
  CHECK(g1.max_gap[1] == Catch::Approx(0.6));

  const GapMetrics g2 = gap_metrics({{1.0, 0.4}});
  CHECK(g2.avg_gap[0] == 0.0);
  CHECK(g2.avg_gap[1] == Catch::Approx(0.6));
  CHECK_THROWS_AS(gap_metrics({}), InvalidInputError);
}

TEST_CASE("gap metrics reproduce the published summary rows at n=400") {
  std::vector<std::vector<double>> rows;
  for (const auto& r : paper_rows::exp1_power_n400()) rows.emplace_back(r.begin(), r.end());
  const GapMetrics g = gap_metrics(rows);
  CHECK(g.avg_gap[paper_rows::kAllCnnMlpColumn] ==
        Catch::Approx(paper_rows::kAvgGapAllCnnMlp400).margin(1e-3));
  CHECK(g.max_gap[paper_rows::kAllCnnMlpColumn] ==
        Catch::Approx(paper_rows::kMaxGapAllCnnMlp400).margin(1e-3));
  // a couple of other columns, same tolerance
  CHECK(g.avg_gap[1] == Catch::Approx(0.005).margin(1e-3));   // second deep test
  CHECK(g.avg_gap[4] == Catch::Approx(0.717).margin(1e-3));   // weakest column
  CHECK(g.avg_gap[19] == Catch::Approx(0.007).margin(1e-3));  // strongest classical column
}

TEST_CASE("power estimation validates input and holds level under the null") {
  StatisticId spear;
  spear.indicator = Indicator::Spearman;
  const double alpha = 0.05;
  const CalibrationTable table = calibrate_statistics({spear}, {}, {40}, alpha, 1500, 5, {}, 2);
  Procedure proc;
  proc.stat = spear;

  GenSpec indep;
  indep.model = ModelId::Independent;
  indep.n = 40;
  CHECK_THROWS_AS(estimate_power(proc, indep, 0, alpha, table, 1), InvalidInputError);

  const double level = estimate_power(proc, indep, 300, alpha, table, 11, {}, 2);
  const double band = 3.0 * std::sqrt(alpha * (1 - alpha) / 300.0);
  CHECK(level >= alpha - band);
  CHECK(level <= alpha + band);
}

TEST_CASE("kendall has near-full power on low-noise linear dependence") {
  StatisticId ken;
  ken.indicator = Indicator::Kendall;
  const CalibrationTable table = calibrate_statistics({ken}, {}, {100}, 0.05, 1500, 6, {}, 2);
  Procedure proc;
  proc.stat = ken;
  GenSpec linear;
  linear.model = ModelId::Linear;
  linear.n = 100;
  linear.role = Role::Train;
  linear.noise_class = NoiseClass::L1;
  const double power = estimate_power(proc, linear, 60, 0.05, table, 17, {}, 2);
  CHECK(power >= 0.8);
}

TEST_CASE("power falls as the noise range widens on the linear model") {
  StatisticId ken;
  ken.indicator = Indicator::Kendall;
  const CalibrationTable table = calibrate_statistics({ken}, {}, {50}, 0.05, 1500, 144, {}, 2);
  Procedure proc;
  proc.stat = ken;
  GenSpec light;
  light.model = ModelId::Linear;
  light.n = 50;
  light.role = Role::Train;  // sigma range [0,1]
  light.noise_class = NoiseClass::L1;
  GenSpec heavy = light;
  heavy.role = Role::Test;  // sigma range [0,2]
  const int reps = 150;
  const double p_light = estimate_power(proc, light, reps, 0.05, table, 55, {}, 2);
  const double p_heavy = estimate_power(proc, heavy, reps, 0.05, table, 55, {}, 2);
  const double band = 3.0 * std::sqrt(0.25 / reps);
  CHECK(p_light >= p_heavy - band);
}

TEST_CASE("experiments have the documented shape and reproduce bitwise") {
  StatisticId spear;
  spear.indicator = Indicator::Spearman;
  const CalibrationTable table = calibrate_statistics({spear}, {}, {30}, 0.05, 400, 8, {}, 2);
  const std::vector<Procedure> procs = {{spear, nullptr}};

  const PowerTable exp1 = run_experiment(Experiment::Exp1, {30}, 6, 0.05, procs, table, 4, {}, 2);
  CHECK(exp1.rows.size() == 20);
  CHECK(exp1.methods == std::vector<std::string>{"spearman"});
  CHECK(exp1.summaries.size() == 1);
  for (const auto& row : exp1.rows) {
    CHECK(row.power[0] >= 0.0);
    CHECK(row.power[0] <= 1.0);
  }

  const PowerTable exp2 = run_experiment(Experiment::Exp2, {30}, 6, 0.05, procs, table, 4, {}, 2);
  CHECK(exp2.rows.size() == 12);  // 4 models x 2 variants + 2 images x 2 noise caps

  const PowerTable again = run_experiment(Experiment::Exp2, {30}, 6, 0.05, procs, table, 4, {}, 1);
  for (std::size_t i = 0; i < exp2.rows.size(); ++i) REQUIRE(exp2.rows[i].power == again.rows[i].power);

  // paired sampling: the single-procedure estimate matches the table cell
  GenSpec linear;
  linear.model = ModelId::Linear;
  linear.n = 30;
  linear.role = Role::Test;
  Procedure proc;
  proc.stat = spear;
  const double solo = estimate_power(proc, linear, 6, 0.05, table, 4, {}, 2);
  CHECK(solo == exp1.rows[0].power[0]);

  // missing calibration is reported, not silently recomputed
  CHECK_THROWS_AS(run_experiment(Experiment::Exp1, {50}, 6, 0.05, procs, table, 4),
                  CalibrationMissingError);
}
