// Command-line surface for the deep-testing toolkit: synthetic sample
// generation, featurization, classifier training, null calibration, single
// tests and power benchmarks.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "deeptest/bench.hpp"
#include "deeptest/calibrate.hpp"
#include "deeptest/core.hpp"
#include "deeptest/dgp.hpp"
#include "deeptest/features.hpp"
#include "deeptest/io.hpp"
#include "deeptest/nn.hpp"
#include "deeptest/parallel.hpp"

namespace {

using namespace deeptest;
namespace fs = std::filesystem;

std::uint64_t base_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("DEPTEST_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

double elapsed_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

FeatureConfig feature_config_for(std::uint64_t seed) {
  FeatureConfig cfg;
  cfg.measures.rng_seed = split_seed(seed, "feat-measures");
  cfg.perms.rng_seed = split_seed(seed, "feat-perms");
  return cfg;
}

std::optional<NoiseClass> parse_noise_class(int flag) {
  if (flag == 0) return std::nullopt;
  if (flag < 1 || flag > 3) throw InvalidInputError("--noise-class must be 1, 2 or 3");
  return static_cast<NoiseClass>(flag);
}

std::optional<Variant> parse_variant(const std::string& flag) {
  if (flag.empty()) return std::nullopt;
  if (flag == "A" || flag == "a") return Variant::A;
  if (flag == "B" || flag == "b") return Variant::B;
  throw InvalidInputError("--variant must be A or B");
}

// --- gen --------------------------------------------------------------------

struct GenOptions {
  std::string model = "independent";
  int threads = 1;
  int n = 0;
  std::optional<std::uint64_t> seed;
  std::string role = "train";
  int noise_class = 0;
  std::string variant;
  std::string out = "sample.csv";
  std::string mask;
  double sigma_max = 0.1;
  bool corpus = false;
  std::vector<int> sizes;
  int per_model = 0;
};

int run_gen(const GenOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = base_seed(opt.seed);

  if (opt.corpus) {
    if (opt.sizes.empty() || opt.per_model < 1)
      throw InvalidInputError("gen --corpus needs --sizes and --per-model");
    const Role role = opt.role == "test" ? Role::Test : Role::Train;
    const auto entries = build_corpus(opt.sizes, opt.per_model, role, seed);
    save_corpus_manifest(opt.out, entries, seed);
    write_run_manifest(opt.out + ".manifest.json", "gen",
                       json{{"corpus", true},
                            {"sizes", opt.sizes},
                            {"per_model", opt.per_model},
                            {"role", opt.role},
                            {"seed", seed}},
                       {}, {opt.out}, elapsed_since(start));
    std::cout << "wrote " << entries.size() << " corpus entries to " << opt.out << "\n";
    return 0;
  }

  if (opt.n < 2) throw InvalidInputError("gen needs --n >= 2");
  BivariateSample sample;
  json cfg{{"model", opt.model}, {"n", opt.n}, {"seed", seed}};
  if (!opt.mask.empty()) {
    const ImageMask mask = read_pgm(opt.mask);
    sample = gen_from_image(mask, opt.n, opt.sigma_max, seed);
    cfg["mask"] = opt.mask;
    cfg["sigma_max"] = opt.sigma_max;
  } else {
    GenSpec spec;
    spec.model = model_from_name(opt.model);
    spec.n = opt.n;
    spec.role = opt.role == "test" ? Role::Test : Role::Train;
    spec.noise_class = parse_noise_class(opt.noise_class);
    spec.variant = parse_variant(opt.variant);
    spec.seed = seed;
    const int mid = static_cast<int>(spec.model);
    if (mid >= 1 && mid <= 20 && !spec.noise_class) spec.noise_class = NoiseClass::L1;
    if (mid >= 21 && mid <= 26 && !spec.variant) spec.variant = Variant::A;
    sample = gen_model(spec);
    cfg["role"] = opt.role;
    if (spec.noise_class) cfg["noise_class"] = static_cast<int>(*spec.noise_class);
    if (spec.variant) cfg["variant"] = *spec.variant == Variant::A ? "A" : "B";
  }
  write_sample_csv(opt.out, sample);
  write_run_manifest(opt.out + ".manifest.json", "gen", cfg, {}, {opt.out}, elapsed_since(start));
  std::cout << "wrote " << sample.size() << " rows to " << opt.out << "\n";
  return 0;
}

// --- featurize ---------------------------------------------------------------

struct FeaturizeOptions {
  std::string in;
  std::string corpus;
  std::string out = "features.json";
  std::optional<std::uint64_t> seed;
  int label = 0;
  int threads = 1;
};

int run_featurize(const FeaturizeOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<FeatureRecord> records;
  std::vector<std::string> inputs;
  json cfg;
  if (!opt.corpus.empty()) {
    const auto entries = load_corpus_manifest(opt.corpus);
    inputs.push_back(opt.corpus);
    cfg["corpus"] = opt.corpus;
    records.resize(entries.size());
    parallel_for(entries.size(), opt.threads, [&](std::size_t i) {
      const BivariateSample s = gen_entry(entries[i]);
      records[i] = featurize(s, entries[i].label, feature_config_for(entries[i].seed));
    });
  } else if (!opt.in.empty()) {
    const std::uint64_t seed = base_seed(opt.seed);
    const BivariateSample s = read_sample_csv(opt.in);
    records.push_back(featurize(s, opt.label, feature_config_for(seed)));
    inputs.push_back(opt.in);
    cfg["in"] = opt.in;
    cfg["seed"] = seed;
    cfg["label"] = opt.label;
  } else {
    throw InvalidInputError("featurize needs --in or --corpus");
  }
  save_features(opt.out, records);
  write_run_manifest(opt.out + ".manifest.json", "featurize", cfg, inputs, {opt.out},
                     elapsed_since(start));
  std::cout << "wrote " << records.size() << " feature records to " << opt.out << "\n";
  return 0;
}

// --- train --------------------------------------------------------------------

struct TrainOptions {
  std::string features;
  std::string arch = "all-mlp";
  std::string out = "model.json";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  int max_epochs = 50;
  int batch_size = 128;
  double lr = 1e-3;
};

int run_train(const TrainOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = base_seed(opt.seed);
  const ArchitectureTag tag = architecture_from_name(opt.arch);
  const auto records = load_features(opt.features);
  Dataset data;
  data.reserve(records.size());
  for (const auto& rec : records) data.push_back(example_from_record(rec, tag));

  NetworkModel model = build_architecture(tag, split_seed(seed, "model-init"));
  TrainConfig cfg;
  cfg.seed = split_seed(seed, "train");
  cfg.max_epochs = opt.max_epochs;
  cfg.batch_size = opt.batch_size;
  cfg.lr = opt.lr;
  const TrainHistory hist = train(model, data, cfg, opt.threads);
  const Metrics final_metrics = evaluate(model, data, opt.threads);

  save_model(opt.out, model, cfg);
  json hj;
  hj["epochs_run"] = hist.epochs_run;
  hj["train_loss"] = hist.train_loss;
  hj["train_acc"] = hist.train_acc;
  hj["val_loss"] = hist.val_loss;
  hj["val_acc"] = hist.val_acc;
  hj["lr"] = hist.lr;
  hj["final_metrics"] = {{"auc", final_metrics.auc},
                         {"accuracy", final_metrics.accuracy},
                         {"precision", final_metrics.precision},
                         {"recall", final_metrics.recall},
                         {"f1", final_metrics.f1}};
  const std::string hist_path = opt.out + ".history.json";
  write_json_file(hist_path, hj);
  write_run_manifest(opt.out + ".manifest.json", "train",
                     json{{"features", opt.features},
                          {"arch", opt.arch},
                          {"seed", seed},
                          {"max_epochs", opt.max_epochs},
                          {"batch_size", opt.batch_size},
                          {"lr", opt.lr}},
                     {opt.features}, {opt.out, hist_path}, elapsed_since(start));
  std::cout << "trained " << opt.arch << " for " << hist.epochs_run << " epochs; full-set AUC "
            << final_metrics.auc << "\n";
  return 0;
}

// --- calibrate -----------------------------------------------------------------

struct CalibrateOptions {
  std::vector<std::string> stats;
  std::vector<std::string> models;
  std::vector<int> sizes;
  double alpha = 0.0;
  int n_prime = 5000;
  std::optional<std::uint64_t> seed;
  std::string out = "calibration.json";
  int threads = 1;
};

int run_calibrate(const CalibrateOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = base_seed(opt.seed);
  if (opt.sizes.empty()) throw InvalidInputError("calibrate needs --n");

  std::vector<NetworkModel> models;
  models.reserve(opt.models.size());
  for (const auto& path : opt.models) models.push_back(load_model(path));

  std::vector<StatisticId> indicator_stats;
  std::vector<DeepStatistic> deep_stats;
  bool want_all_indicators = false;
  bool want_deep = opt.stats.empty();  // default: whatever models were given
  for (const auto& s : opt.stats) {
    if (s == "all") {
      want_all_indicators = true;
      want_deep = true;
    } else if (s == "deep") {
      want_deep = true;
    } else {
      indicator_stats.push_back(StatisticId::from_name(s));
      if (indicator_stats.back().deep)
        throw InvalidInputError("pass deep statistics via --model plus --stat deep");
    }
  }
  if (want_all_indicators) indicator_stats = all_indicator_statistics();
  if (want_deep) {
    for (const auto& m : models) {
      DeepStatistic d;
      d.id.deep = true;
      d.id.arch = m.tag;
      d.model = &m;
      deep_stats.push_back(d);
    }
  }
  if (indicator_stats.empty() && deep_stats.empty())
    throw InvalidInputError("calibrate: nothing to calibrate; pass --stat and/or --model");

  const CalibrationTable table = calibrate_statistics(indicator_stats, deep_stats, opt.sizes,
                                                      opt.alpha, opt.n_prime, seed, {}, opt.threads);
  save_calibration(opt.out, table, seed);
  write_run_manifest(opt.out + ".manifest.json", "calibrate",
                     json{{"stats", opt.stats},
                          {"models", opt.models},
                          {"sizes", opt.sizes},
                          {"alpha", opt.alpha},
                          {"nprime", opt.n_prime},
                          {"seed", seed}},
                     opt.models, {opt.out}, elapsed_since(start));
  std::cout << "wrote " << table.entries.size() << " calibration entries to " << opt.out << "\n";
  return 0;
}

// --- test ---------------------------------------------------------------------

struct TestOptions {
  std::string in;
  std::string model;
  std::string stat;
  std::string calibration;
  double alpha = 0.0;
  std::optional<std::uint64_t> seed;
};

int run_test(const TestOptions& opt) {
  const std::uint64_t seed = base_seed(opt.seed);
  const BivariateSample sample = read_sample_csv(opt.in);
  const CalibrationTable table = load_calibration(opt.calibration);
  const FeatureConfig cfg = feature_config_for(seed);

  TestDecision d;
  std::string stat_name;
  if (!opt.model.empty()) {
    const NetworkModel model = load_model(opt.model);
    d = deep_test(sample, model, table, opt.alpha, cfg);
    StatisticId id;
    id.deep = true;
    id.arch = model.tag;
    stat_name = id.name();
  } else if (!opt.stat.empty()) {
    const StatisticId id = StatisticId::from_name(opt.stat);
    if (id.deep) throw InvalidInputError("test: deep statistics need --model");
    d = indicator_test(sample, id.indicator, table, opt.alpha, cfg);
    stat_name = id.name();
  } else {
    throw InvalidInputError("test needs --model or --stat");
  }
  json out;
  out["statistic"] = stat_name;
  out["n"] = sample.size();
  out["alpha"] = opt.alpha;
  out["score"] = d.statistic;
  out["d_alpha"] = d.d_alpha;
  out["reject"] = d.reject;
  std::cout << out.dump(1) << "\n";
  return 0;
}

// --- power ----------------------------------------------------------------------

struct PowerOptions {
  int experiment = 1;
  std::vector<int> sizes;
  int reps = 200;
  double alpha = 0.0;
  std::vector<std::string> models;
  std::vector<std::string> stats;
  std::string calibration;
  std::string out_dir = "power-out";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool full = false;
};

int run_power(const PowerOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = base_seed(opt.seed);
  std::vector<int> sizes = opt.sizes;
  int reps = opt.reps;
  if (opt.full) {
    if (sizes.empty()) sizes = {30, 50, 100, 200, 300, 400};
    reps = std::max(reps, 1000);
    std::cerr << "note: --full runs " << reps << " replicates over " << sizes.size()
              << " sizes; expect a long wall-clock time\n";
  }
  if (sizes.empty()) sizes = {50, 100};

  const CalibrationTable table = load_calibration(opt.calibration);
  std::vector<NetworkModel> models;
  models.reserve(opt.models.size());
  for (const auto& path : opt.models) models.push_back(load_model(path));

  std::vector<Procedure> procs;
  for (const auto& m : models) {
    Procedure p;
    p.stat.deep = true;
    p.stat.arch = m.tag;
    p.model = &m;
    procs.push_back(p);
  }
  bool all_requested = opt.stats.empty();
  for (const auto& s : opt.stats) {
    if (s == "all") {
      all_requested = true;
    } else {
      Procedure p;
      p.stat = StatisticId::from_name(s);
      procs.push_back(p);
    }
  }
  if (all_requested)
    for (const auto& id : all_indicator_statistics()) procs.push_back({id, nullptr});

  const Experiment which = opt.experiment == 2 ? Experiment::Exp2 : Experiment::Exp1;
  const PowerTable result =
      run_experiment(which, sizes, reps, opt.alpha, procs, table, seed, {}, opt.threads);

  fs::create_directories(opt.out_dir);
  const std::string csv = (fs::path(opt.out_dir) / "power.csv").string();
  const std::string plot = (fs::path(opt.out_dir) / "power_plot.csv").string();
  const std::string summary = (fs::path(opt.out_dir) / "summary.json").string();
  save_power_csv(csv, result);
  save_power_plot_csv(plot, result);
  write_json_file(summary, power_summary_json(result));
  write_run_manifest((fs::path(opt.out_dir) / "manifest.json").string(), "power",
                     json{{"experiment", opt.experiment},
                          {"sizes", sizes},
                          {"reps", reps},
                          {"alpha", opt.alpha},
                          {"models", opt.models},
                          {"stats", opt.stats},
                          {"seed", seed},
                          {"full", opt.full}},
                     {opt.calibration}, {csv, plot, summary}, elapsed_since(start));
  std::cout << "wrote power tables for " << result.rows.size() << " rows to " << opt.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep-testing toolkit: learned bivariate independence tests"};
  app.require_subcommand(1);

  GenOptions gen_opt;
  CLI::App* gen = app.add_subcommand("gen", "generate synthetic samples or corpus manifests");
  gen->add_option("--model", gen_opt.model, "generator name (e.g. linear, diamond, independent)");
  gen->add_option("--n", gen_opt.n, "sample size");
  auto* gen_seed = gen->add_option("--seed", "base seed (fallback: DEPTEST_SEED)");
  gen->add_option("--role", gen_opt.role, "train|test parameterization")
      ->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--noise-class", gen_opt.noise_class, "noise structure 1|2|3 for models 1-20");
  gen->add_option("--variant", gen_opt.variant, "variant A|B for models 21-26");
  gen->add_option("--out", gen_opt.out, "output CSV (or corpus JSON with --corpus)");
  gen->add_option("--mask", gen_opt.mask, "grayscale PGM mask for image-based sampling");
  gen->add_option("--sigma-max", gen_opt.sigma_max, "vertical noise cap for --mask sampling");
  gen->add_flag("--corpus", gen_opt.corpus, "emit a labeled corpus manifest instead of one sample");
  gen->add_option("--threads", gen_opt.threads, "worker threads (generation is sequential)");
  gen->add_option("--sizes", gen_opt.sizes, "corpus sample sizes")->delimiter(',');
  gen->add_option("--per-model", gen_opt.per_model, "dependent samples per model per size");

  FeaturizeOptions feat_opt;
  CLI::App* feat = app.add_subcommand("featurize", "compute image and indicator features");
  feat->add_option("--in", feat_opt.in, "input sample CSV");
  feat->add_option("--corpus", feat_opt.corpus, "corpus manifest JSON");
  feat->add_option("--out", feat_opt.out, "output features JSON");
  auto* feat_seed = feat->add_option("--seed", "base seed (fallback: DEPTEST_SEED)");
  feat->add_option("--label", feat_opt.label, "label for --in samples (default 0)");
  feat->add_option("--threads", feat_opt.threads, "worker threads");

  TrainOptions train_opt;
  CLI::App* tr = app.add_subcommand("train", "train a classifier on feature records");
  tr->add_option("--features", train_opt.features, "features JSON")->required();
  tr->add_option("--arch", train_opt.arch, "all-mlp|all-cnn|all-cnn-mlp")
      ->check(CLI::IsMember({"all-mlp", "all-cnn", "all-cnn-mlp"}));
  tr->add_option("--out", train_opt.out, "output model JSON");
  auto* tr_seed = tr->add_option("--seed", "base seed (fallback: DEPTEST_SEED)");
  tr->add_option("--threads", train_opt.threads, "worker threads");
  tr->add_option("--epochs", train_opt.max_epochs, "max epochs");
  tr->add_option("--batch-size", train_opt.batch_size, "batch size");
  tr->add_option("--lr", train_opt.lr, "initial learning rate");

  CalibrateOptions cal_opt;
  CLI::App* cal = app.add_subcommand("calibrate", "build null-calibration tables");
  cal->add_option("--stat", cal_opt.stats, "statistics: names, 'all', or 'deep'")->delimiter(',');
  cal->add_option("--model", cal_opt.models, "model files for deep statistics")->delimiter(',');
  cal->add_option("--n", cal_opt.sizes, "sample sizes")->delimiter(',')->required();
  cal->add_option("--alpha", cal_opt.alpha, "significance level")->required();
  cal->add_option("--nprime", cal_opt.n_prime, "null-calibration set size (default 5000)");
  auto* cal_seed = cal->add_option("--seed", "base seed (fallback: DEPTEST_SEED)");
  cal->add_option("--out", cal_opt.out, "output calibration JSON");
  cal->add_option("--threads", cal_opt.threads, "worker threads");

  TestOptions test_opt;
  CLI::App* te = app.add_subcommand("test", "run one independence test on a CSV sample");
  te->add_option("--in", test_opt.in, "input sample CSV")->required();
  te->add_option("--model", test_opt.model, "model JSON for the deep test");
  te->add_option("--stat", test_opt.stat, "indicator statistic name");
  te->add_option("--calibration", test_opt.calibration, "calibration JSON")->required();
  te->add_option("--alpha", test_opt.alpha, "significance level")->required();
  auto* te_seed = te->add_option("--seed", "base seed (fallback: DEPTEST_SEED)");

  PowerOptions pow_opt;
  CLI::App* po = app.add_subcommand("power", "run a power experiment");
  po->add_option("--exp", pow_opt.experiment, "1 (training models) or 2 (held-out models)")
      ->check(CLI::IsMember({1, 2}));
  po->add_option("--sizes", pow_opt.sizes, "sample sizes (default 50,100)")->delimiter(',');
  po->add_option("--reps", pow_opt.reps, "Monte-Carlo replicates per row (default 200)");
  po->add_option("--alpha", pow_opt.alpha, "significance level")->required();
  po->add_option("--model", pow_opt.models, "model files for deep tests")->delimiter(',');
  po->add_option("--stats", pow_opt.stats, "indicator statistics or 'all' (default all)")
      ->delimiter(',');
  po->add_option("--calibration", pow_opt.calibration, "calibration JSON")->required();
  po->add_option("--out-dir", pow_opt.out_dir, "output directory");
  auto* po_seed = po->add_option("--seed", "base seed (fallback: DEPTEST_SEED)");
  po->add_option("--threads", pow_opt.threads, "worker threads");
  po->add_flag("--full", pow_opt.full, "benchmark-scale defaults (1000 reps, 6 sizes); slow");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  auto seed_of = [](const CLI::Option* o) -> std::optional<std::uint64_t> {
    if (o->count() == 0) return std::nullopt;
    return o->as<std::uint64_t>();
  };
  gen_opt.seed = seed_of(gen_seed);
  feat_opt.seed = seed_of(feat_seed);
  train_opt.seed = seed_of(tr_seed);
  cal_opt.seed = seed_of(cal_seed);
  test_opt.seed = seed_of(te_seed);
  pow_opt.seed = seed_of(po_seed);

  try {
    if (gen->parsed()) return run_gen(gen_opt);
    if (feat->parsed()) return run_featurize(feat_opt);
    if (tr->parsed()) return run_train(train_opt);
    if (cal->parsed()) return run_calibrate(cal_opt);
    if (te->parsed()) return run_test(test_opt);
    if (po->parsed()) return run_power(pow_opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
