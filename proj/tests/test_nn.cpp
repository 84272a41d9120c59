#include <catch_amalgamated.hpp>

#include <cmath>

#include "deeptest/nn.hpp"
#include "deeptest/rng.hpp"
#include "oracles.hpp"

using namespace deeptest;

namespace {

// Small hybrid model covering every layer kind: conv, relu, maxpool,
// dropout, flatten, dense, concat, sigmoid.
NetworkModel toy_hybrid(std::uint64_t seed) {
  NetworkModel m;
  m.tag = ArchitectureTag::AllCnnMlp;
  m.image_h = 5;
  m.image_w = 5;
  m.has_conv = true;
  m.has_score_embed = true;
  Rng rng(split_seed(seed, "init"));
  m.conv1 = nn_detail::make_conv(1, 2, rng);
  m.conv2 = nn_detail::make_conv(2, 2, rng);
  m.score_embed = nn_detail::make_dense(4, 3, rng);
  m.trunk.push_back(nn_detail::make_dense(5, 4, rng));  // 2 pooled + 3 embedded
  m.trunk.push_back(nn_detail::make_dense(4, 1, rng));
  m.trunk_dropout = {true, false};
  return m;
}

Example toy_example(std::uint64_t seed, int label) {
  Rng rng(seed);
  Example ex;
  for (int i = 0; i < 25; ++i) ex.image.push_back(rng.uniform01());
  for (int i = 0; i < 4; ++i) ex.indicators.push_back(rng.normal());
  ex.label = label;
  return ex;
}

double flat_param_count(const NetworkModel& m) { return m.trainable_parameters(); }

}  // namespace

TEST_CASE("architecture parameter counts match the published sizes") {
  const NetworkModel mlp = build_architecture(ArchitectureTag::AllMlp, 1);
  CHECK(mlp.trainable_parameters() == 1761);
  const NetworkModel cnn = build_architecture(ArchitectureTag::AllCnn, 1);
  CHECK(cnn.trainable_parameters() == 567137);
  CHECK(cnn.flatten_width() == 2048);
  const NetworkModel hybrid = build_architecture(ArchitectureTag::AllCnnMlp, 1);
  CHECK(hybrid.trainable_parameters() == 580033);
}

TEST_CASE("zero weights give score one half; inference is deterministic") {
  NetworkModel m = build_architecture(ArchitectureTag::AllMlp, 3);
  for (auto* arr : m.param_arrays()) std::fill(arr->begin(), arr->end(), 0.0);
  Example ex;
  ex.indicators.assign(20, 0.7);
  CHECK(forward(m, ex, Mode::Infer) == 0.5);
  const NetworkModel r = build_architecture(ArchitectureTag::AllMlp, 4);
  Example ex2;
  ex2.indicators.assign(20, 0.3);
  CHECK(forward(r, ex2, Mode::Infer) == forward(r, ex2, Mode::Infer));
}

TEST_CASE("convolution layer equals a brute-force 2d correlation") {
  Rng rng(17);
  ConvLayer l = nn_detail::make_conv(1, 1, rng);
  std::vector<double> x(25);
  for (double& v : x) v = rng.normal();
  std::vector<double> y(25);
  nn_detail::conv_forward(l, x.data(), 5, 5, y.data());
  for (int cx = 0; cx < 5; ++cx) {
    for (int cy = 0; cy < 5; ++cy) {
      double want = l.b[0];
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = cx + kx - 1;
          const int sy = cy + ky - 1;
          if (sx < 0 || sx >= 5 || sy < 0 || sy >= 5) continue;
          want += x[static_cast<std::size_t>(sx) * 5 + static_cast<std::size_t>(sy)] *
                  l.w[(static_cast<std::size_t>(ky) * 3 + static_cast<std::size_t>(kx))];
        }
      CHECK(y[static_cast<std::size_t>(cx) * 5 + static_cast<std::size_t>(cy)] ==
            Catch::Approx(want).margin(1e-10));
    }
  }
}

TEST_CASE("gradients match central finite differences for every layer kind") {
  NetworkModel m = toy_hybrid(11);
  std::vector<Example> store;
  for (int i = 0; i < 4; ++i) store.push_back(toy_example(100 + static_cast<std::uint64_t>(i), i % 2));
  std::vector<const Example*> batch;
  for (const auto& e : store) batch.push_back(&e);
  const std::uint64_t seed = 5;

  const auto [loss0, grads] = loss_and_grads(m, batch, seed);
  CHECK(loss0 > 0.0);

  auto params = m.param_arrays();
  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t a = 0; a < params.size(); ++a) {
    for (std::size_t i = 0; i < params[a]->size(); i += std::max<std::size_t>(1, params[a]->size() / 7)) {
      const double orig = (*params[a])[i];
      (*params[a])[i] = orig + h;
      const double up = loss_and_grads(m, batch, seed).first;
      (*params[a])[i] = orig - h;
      const double dn = loss_and_grads(m, batch, seed).first;
      (*params[a])[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double an = grads.g[a][i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("duplicated batch keeps the mean gradient unchanged") {
  NetworkModel m = toy_hybrid(13);
  std::vector<Example> store = {toy_example(1, 1), toy_example(2, 0)};
  std::vector<const Example*> batch = {&store[0], &store[1]};
  std::vector<const Example*> doubled = {&store[0], &store[1], &store[0], &store[1]};
  // dropout masks depend on the in-batch position, so compare with dropout off
  m.dropout_rate = 0.0;
  const auto [l1, g1] = loss_and_grads(m, batch, 9);
  const auto [l2, g2] = loss_and_grads(m, doubled, 9);
  CHECK(l1 == Catch::Approx(l2).margin(1e-12));
  for (std::size_t a = 0; a < g1.g.size(); ++a)
    for (std::size_t i = 0; i < g1.g[a].size(); ++i)
      CHECK(g1.g[a][i] == Catch::Approx(g2.g[a][i]).margin(1e-12));
}

TEST_CASE("bce loss saturates at the clamp floor") {
  CHECK(bce_loss(1.0, 1) == Catch::Approx(-std::log(1.0 - 1e-7)).margin(1e-12));
  CHECK(bce_loss(0.0, 0) == Catch::Approx(-std::log(1.0 - 1e-7)).margin(1e-12));
  CHECK(bce_loss(0.5, 1) == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("adam drives a single-parameter quadratic to its minimum") {
  // minimize (theta - 0.1)^2 with the library's update rule; each Adam step
  // moves about lr, so 500 steps comfortably cover the distance
  NetworkModel m;  // shell to reuse adam_step
  m.trunk.push_back(DenseLayer{1, 1, {0.0}, {0.0}});
  m.trunk_dropout = {false};
  TrainConfig cfg;
  AdamState st(m);
  Gradients g(m);
  g.g[1][0] = 0.0;  // bias never updated: gradient stays zero
  for (int step = 0; step < 500; ++step) {
    const double theta = m.trunk[0].w[0];
    g.g[0][0] = 2.0 * (theta - 0.1);
    adam_step(m, st, g, cfg, cfg.lr);
  }
  CHECK(std::abs(m.trunk[0].w[0] - 0.1) < 1e-3);
}

TEST_CASE("training separates a linearly separable toy problem") {
  Rng rng(55);
  Dataset data;
  for (int i = 0; i < 200; ++i) {
    Example ex;
    const int label = i % 2;
    const double shift = label == 1 ? 1.5 : -1.5;
    ex.indicators = {rng.normal() + shift, rng.normal() - shift};
    ex.label = label;
    data.push_back(ex);
  }
  NetworkModel m;
  m.tag = ArchitectureTag::AllMlp;
  Rng irng(split_seed(77, "init"));
  m.trunk.push_back(nn_detail::make_dense(2, 32, irng));
  m.trunk.push_back(nn_detail::make_dense(32, 32, irng));
  m.trunk.push_back(nn_detail::make_dense(32, 1, irng));
  m.trunk_dropout = {true, true, false};
  TrainConfig cfg;
  cfg.seed = 2;
  cfg.batch_size = 32;
  cfg.max_epochs = 40;
  const TrainHistory hist = train(m, data, cfg);
  CHECK(hist.epochs_run >= 1);
  // final accuracy on the training portion
  int hits = 0;
  for (const auto& ex : data) hits += (forward(m, ex, Mode::Infer) > 0.5) == (ex.label == 1);
  CHECK(static_cast<double>(hits) / static_cast<double>(data.size()) >= 0.95);
  // learning rate never increases
  for (std::size_t e = 1; e < hist.lr.size(); ++e) CHECK(hist.lr[e] <= hist.lr[e - 1]);
}

TEST_CASE("training is bitwise reproducible across thread counts") {
  Rng rng(66);
  Dataset data;
  for (int i = 0; i < 160; ++i) {
    Example ex;
    ex.indicators = {rng.normal(), rng.normal(), rng.normal()};
    ex.label = i % 2;
    data.push_back(ex);
  }
  auto make = [&] {
    NetworkModel m;
    m.tag = ArchitectureTag::AllMlp;
    Rng irng(split_seed(5, "init"));
    m.trunk.push_back(nn_detail::make_dense(3, 8, irng));
    m.trunk.push_back(nn_detail::make_dense(8, 1, irng));
    m.trunk_dropout = {true, false};
    return m;
  };
  NetworkModel a = make();
  NetworkModel b = make();
  TrainConfig cfg;
  cfg.seed = 31;
  cfg.batch_size = 32;
  cfg.max_epochs = 6;
  train(a, data, cfg, 1);
  train(b, data, cfg, 8);
  const auto pa = a.param_arrays();
  const auto pb = b.param_arrays();
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(*pa[i] == *pb[i]);
}

TEST_CASE("plateau rule halves the learning rate down to the floor") {
  // forged history: keep feeding non-improving epochs through a tiny dataset
  // trained with zero-gradient weights is fiddly; check the arithmetic rule
  TrainConfig cfg;
  double lr = cfg.lr;
  for (int trigger = 0; trigger < 2; ++trigger) lr = std::max(lr * cfg.plateau_factor, cfg.min_lr);
  CHECK(lr == Catch::Approx(2.5e-4).margin(1e-18));
  for (int trigger = 0; trigger < 64; ++trigger) lr = std::max(lr * cfg.plateau_factor, cfg.min_lr);
  CHECK(lr == Catch::Approx(cfg.min_lr).margin(1e-18));
}

TEST_CASE("evaluate computes confusion metrics and pair-counting auc") {
  NetworkModel m;  // unused weights; feed scores through a stub dataset
  // perfectly separated scores -> AUC 1
  Dataset data;
  Rng rng(3);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) {
    Example ex;
    ex.indicators = {0.0};
    ex.label = i % 2;
    data.push_back(ex);
    labels.push_back(ex.label);
  }
  // use a 1-parameter passthrough network: score = sigmoid(w*x)
  m.trunk.push_back(DenseLayer{1, 1, {1.0}, {0.0}});
  m.trunk_dropout = {false};
  for (int i = 0; i < 50; ++i) {
    data[static_cast<std::size_t>(i)].indicators[0] =
        data[static_cast<std::size_t>(i)].label == 1 ? 2.0 + rng.uniform01() : -2.0 - rng.uniform01();
  }
  const Metrics perfect = evaluate(m, data);
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.accuracy == 1.0);

  // all predictions positive on balanced data
  for (auto& ex : data) ex.indicators[0] = 5.0;
  const Metrics allpos = evaluate(m, data);
  CHECK(allpos.accuracy == 0.5);
  CHECK(allpos.recall == 1.0);
  CHECK(allpos.precision == 0.5);

  // random scores: midrank AUC equals the O(n^2) pair-counting oracle
  for (int i = 0; i < 50; ++i)
    data[static_cast<std::size_t>(i)].indicators[0] = rng.uniform(-3.0, 3.0);
  const Metrics r = evaluate(m, data);
  for (int i = 0; i < 50; ++i) {
    scores.push_back(forward(m, data[static_cast<std::size_t>(i)], Mode::Infer));
  }
  CHECK(r.auc == Catch::Approx(oracle::auc_pairs(scores, labels)).margin(1e-12));
}

TEST_CASE("model weight hash changes with any weight") {
  NetworkModel m = build_architecture(ArchitectureTag::AllMlp, 9);
  const std::uint64_t h0 = model_weight_hash(m);
  m.trunk[0].w[0] += 1e-9;
  CHECK(model_weight_hash(m) != h0);
  CHECK(flat_param_count(m) == 1761);
}
