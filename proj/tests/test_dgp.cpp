#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <map>

#include "deeptest/dgp.hpp"
#include "deeptest/indicators.hpp"

using namespace deeptest;

TEST_CASE("independent generator is deterministic and uniform") {
  const BivariateSample a = gen_independent(10000, 42);
  const BivariateSample b = gen_independent(10000, 42);
  CHECK(a.z1 == b.z1);
  CHECK(a.z2 == b.z2);
  for (const double x : a.z1) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
  CHECK(std::abs(spearman(to_pseudo(a))) < 0.05);
  CHECK_THROWS_AS(gen_independent(1, 0), InvalidInputError);
}

TEST_CASE("gen_model is bitwise deterministic per spec") {
  for (int m = 1; m <= 26; ++m) {
    GenSpec spec;
    spec.model = static_cast<ModelId>(m);
    spec.n = 64;
    spec.seed = 1000 + static_cast<std::uint64_t>(m);
    if (m <= 20) {
      spec.noise_class = NoiseClass::L2;
      spec.role = Role::Test;
    } else {
      spec.variant = Variant::B;
    }
    const BivariateSample a = gen_model(spec);
    const BivariateSample b = gen_model(spec);
    REQUIRE(a.z1 == b.z1);
    REQUIRE(a.z2 == b.z2);
    spec.seed += 1;
    const BivariateSample c = gen_model(spec);
    REQUIRE(a.z1 != c.z1);
  }
}

TEST_CASE("spec validation rejects wrong knob combinations") {
  GenSpec spec;
  spec.model = ModelId::Linear;
  spec.n = 20;
  CHECK_THROWS_AS(gen_model(spec), InvalidInputError);  // missing noise class
  spec.noise_class = NoiseClass::L1;
  spec.variant = Variant::A;
  CHECK_THROWS_AS(gen_model(spec), InvalidInputError);  // variant on a training model
  GenSpec lap;
  lap.model = ModelId::Laplace;
  lap.n = 20;
  CHECK_THROWS_AS(gen_model(lap), InvalidInputError);  // missing variant
  lap.variant = Variant::A;
  lap.noise_class = NoiseClass::L1;
  CHECK_THROWS_AS(gen_model(lap), InvalidInputError);
}

TEST_CASE("linear model keeps z1 in [-1,1] under L1 training noise") {
  GenSpec spec;
  spec.model = ModelId::Linear;
  spec.n = 500;
  spec.noise_class = NoiseClass::L1;
  spec.seed = 7;
  const BivariateSample s = gen_model(spec);
  for (const double x : s.z1) {
    CHECK(x >= -1.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("diamond rotation angle is confined to [pi/6, pi/3]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GenSpec spec;
    spec.model = ModelId::Diamond;
    spec.n = 16;
    spec.noise_class = NoiseClass::L1;
    spec.seed = seed;
    GenParts parts;
    gen_model(spec, &parts);
    CHECK(parts.theta >= std::numbers::pi / 6.0);
    CHECK(parts.theta <= std::numbers::pi / 3.0);
  }
}

TEST_CASE("crescent structural points stay in the unit disk") {
  GenSpec spec;
  spec.model = ModelId::Crescent;
  spec.n = 300;
  spec.noise_class = NoiseClass::L1;
  spec.role = Role::Test;
  spec.seed = 11;
  GenParts parts;
  gen_model(spec, &parts);
  for (std::size_t k = 0; k < parts.struct_x.size(); ++k) {
    CHECK(parts.struct_x[k] * parts.struct_x[k] + parts.struct_y[k] * parts.struct_y[k] <=
          1.0 + 1e-12);
  }
}

TEST_CASE("circle structural points sit on unit circles around their centers") {
  GenSpec spec;
  spec.model = ModelId::Circles;
  spec.n = 200;
  spec.noise_class = NoiseClass::L1;
  spec.seed = 5;
  GenParts parts;
  gen_model(spec, &parts);
  for (std::size_t k = 0; k < parts.struct_x.size(); ++k) {
    const double dx = parts.struct_x[k] - parts.center_x[k];
    const double dy = parts.struct_y[k] - parts.center_y[k];
    CHECK(std::sqrt(dx * dx + dy * dy) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("rotation preserves norms of structural points") {
  for (const ModelId m : {ModelId::Cubic, ModelId::Spiral, ModelId::Heart, ModelId::Taegeuk}) {
    GenSpec spec;
    spec.model = m;
    spec.n = 100;
    spec.noise_class = NoiseClass::L3;
    spec.role = Role::Test;
    spec.seed = 31;
    GenParts parts;
    gen_model(spec, &parts);
    for (std::size_t k = 0; k < parts.struct_x.size(); ++k) {
      const double before =
          std::hypot(parts.struct_x[k], parts.struct_y[k]);
      const double after = std::hypot(parts.rot_x[k], parts.rot_y[k]);
      CHECK(after == Catch::Approx(before).margin(1e-12));
    }
  }
}

TEST_CASE("tree ring points stay within the largest radius plus noise slack") {
  GenSpec spec;
  spec.model = ModelId::TreeRing;
  spec.n = 400;
  spec.variant = Variant::B;
  spec.seed = 3;
  const BivariateSample s = gen_model(spec);
  for (std::size_t k = 0; k < s.size(); ++k) {
    CHECK(std::hypot(s.z1[k], s.z2[k]) <= 10.0 + 5.0 * 1.0);
  }
}

TEST_CASE("ishigami and variance models keep z1 in (0,1)") {
  for (const ModelId m : {ModelId::Ishigami, ModelId::Variance}) {
    GenSpec spec;
    spec.model = m;
    spec.n = 200;
    spec.variant = Variant::A;
    spec.seed = 13;
    const BivariateSample s = gen_model(spec);
    for (const double x : s.z1) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
  }
}

TEST_CASE("single dark pixel concentrates all pre-noise points") {
  ImageMask m;
  m.width = 2;
  m.height = 2;
  m.gray = {1.0, 1.0, 0.0, 1.0};  // only pixel (i=1,j=2) is black
  GenParts parts;
  const BivariateSample s = gen_from_image(m, 50, 0.0, 21, &parts);
  for (std::size_t k = 0; k < parts.struct_x.size(); ++k) {
    CHECK(parts.struct_x[k] == parts.struct_x[0]);
    CHECK(parts.struct_y[k] == parts.struct_y[0]);
  }
  // sigma_max = 0: outputs are exactly rotated pixel coordinates
  for (std::size_t k = 0; k < s.size(); ++k) {
    CHECK(std::hypot(s.z1[k], s.z2[k]) ==
          Catch::Approx(std::hypot(parts.struct_x[k], parts.struct_y[k])).margin(1e-12));
  }
}

TEST_CASE("uniform-gray mask samples pixels uniformly") {
  ImageMask m;
  m.width = 5;
  m.height = 5;
  m.gray.assign(25, 0.5);
  GenParts parts;
  gen_from_image(m, 10000, 0.0, 8, &parts);
  // chi-square goodness of fit over the 25 cells, 24 dof, 1% critical 42.98
  std::map<std::pair<double, double>, int> counts;
  for (std::size_t k = 0; k < parts.struct_x.size(); ++k)
    ++counts[{parts.struct_x[k], parts.struct_y[k]}];
  CHECK(counts.size() == 25);
  double chi2 = 0.0;
  const double expected = 10000.0 / 25.0;
  for (const auto& [cell, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 42.98);
}

TEST_CASE("pgm masks round-trip") {
  const ImageMask& m = infinity_mask();
  m.validate();
  pi_mask().validate();
  const std::string path = "test_mask_roundtrip.pgm";
  write_pgm(path, m);
  const ImageMask back = read_pgm(path);
  CHECK(back.width == m.width);
  CHECK(back.height == m.height);
  CHECK(back.gray == m.gray);
  std::remove(path.c_str());
}

TEST_CASE("corpus has the documented balance and class proportions") {
  const auto entries = build_corpus({50}, 10, Role::Train, 123);
  REQUIRE(entries.size() == 400);
  int dep = 0;
  int indep = 0;
  std::map<NoiseClass, int> by_class;
  for (const auto& e : entries) {
    if (e.label == 1) {
      ++dep;
      ++by_class[*e.noise_class];
    } else {
      ++indep;
    }
  }
  CHECK(dep == 200);
  CHECK(indep == 200);
  CHECK(by_class[NoiseClass::L1] == 120);  // 6 per model
  CHECK(by_class[NoiseClass::L2] == 40);
  CHECK(by_class[NoiseClass::L3] == 40);

  // entry seeds are stable across rebuilds
  const auto again = build_corpus({50}, 10, Role::Train, 123);
  for (std::size_t i = 0; i < entries.size(); ++i) REQUIRE(entries[i].seed == again[i].seed);
  CHECK_THROWS_AS(build_corpus({50}, 0, Role::Train, 1), InvalidInputError);
}

TEST_CASE("model names round-trip") {
  for (int m = 1; m <= 27; ++m) {
    const auto id = static_cast<ModelId>(m);
    CHECK(model_from_name(model_name(id)) == id);
  }
  CHECK_THROWS_AS(model_from_name("nope"), InvalidInputError);
}
