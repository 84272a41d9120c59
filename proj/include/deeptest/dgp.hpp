#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "deeptest/core.hpp"
#include "deeptest/errors.hpp"
#include "deeptest/rng.hpp"

namespace deeptest {

// Models 1..20 form the training family; 21..26 are the held-out family
// (two of them image-based). Independent is the null generator.
enum class ModelId : int {
  Linear = 1,
  Diamond,
  Triangle,
  Crescent,
  Points,
  Exponential,
  Circles,
  Cross,
  Wedge,
  Cubic,
  WShape,
  Parabola,
  TwoParabola,
  Sine,
  Doppler,
  HeavySine,
  Heart,
  Spiral,
  Taegeuk,
  Samtaegeuk,
  Laplace,
  Ishigami,
  TreeRing,
  Variance,
  Infinity,
  Pi,
  Independent,
};

enum class Role { Train, Test };
enum class NoiseClass : int { L1 = 1, L2 = 2, L3 = 3 };
enum class Variant { A, B };

inline const char* model_name(ModelId m) {
  switch (m) {
    case ModelId::Linear: return "linear";
    case ModelId::Diamond: return "diamond";
    case ModelId::Triangle: return "triangle";
    case ModelId::Crescent: return "crescent";
    case ModelId::Points: return "points";
    case ModelId::Exponential: return "exponential";
    case ModelId::Circles: return "circles";
    case ModelId::Cross: return "cross";
    case ModelId::Wedge: return "wedge";
    case ModelId::Cubic: return "cubic";
    case ModelId::WShape: return "w-shape";
    case ModelId::Parabola: return "parabola";
    case ModelId::TwoParabola: return "two-parabola";
    case ModelId::Sine: return "sine";
    case ModelId::Doppler: return "doppler";
    case ModelId::HeavySine: return "heavy-sine";
    case ModelId::Heart: return "heart";
    case ModelId::Spiral: return "spiral";
    case ModelId::Taegeuk: return "taegeuk";
    case ModelId::Samtaegeuk: return "samtaegeuk";
    case ModelId::Laplace: return "laplace";
    case ModelId::Ishigami: return "ishigami";
    case ModelId::TreeRing: return "tree-ring";
    case ModelId::Variance: return "variance";
    case ModelId::Infinity: return "infinity";
    case ModelId::Pi: return "pi";
    case ModelId::Independent: return "independent";
  }
  return "?";
}

inline ModelId model_from_name(const std::string& s) {
  for (int m = 1; m <= 27; ++m) {
    if (s == model_name(static_cast<ModelId>(m))) return static_cast<ModelId>(m);
  }
  throw InvalidInputError("unknown model name: " + s);
}

struct GenSpec {
  ModelId model = ModelId::Independent;
  int n = 0;
  Role role = Role::Train;
  std::optional<NoiseClass> noise_class;
  std::optional<Variant> variant;
  std::uint64_t seed = 0;
};

// Pre-noise intermediates, filled on request for support/rotation checks.
// Requesting them never changes the draw sequence.
struct GenParts {
  std::vector<double> struct_x;  // structural points before noise and rotation
  std::vector<double> struct_y;
  std::vector<double> center_x;  // designated centers where the model has them
  std::vector<double> center_y;
  std::vector<double> rot_x;  // structural points after rotation, still noise-free
  std::vector<double> rot_y;
  std::vector<double> point_thetas;  // per-point angles (image models)
  double theta = 0.0;
};

namespace detail {

struct SigmaRule {
  enum Kind { kFixed, kProp, kAffine, kComp } kind = kFixed;
  double a = 0.0;
  double b = 0.0;

  double at(double x, double fixed_sigma) const {
    switch (kind) {
      case kFixed: return fixed_sigma;
      case kProp: return a * std::abs(x);
      case kAffine: return std::abs(a + b * x);
      case kComp: return std::abs(a - b * std::abs(x));
    }
    return fixed_sigma;
  }
};

// Noise configuration of one training-family model: the L1 range per role,
// the L2 proportional/affine forms, and the L3 complement forms. The values
// are frozen generator contract.
struct NoiseTable {
  double l1_train_hi;
  double l1_test_lo;
  double l1_test_hi;
  double l2_mult;
  double l2_test_a;
  double l2_test_b;
  double l3_c;
  double l3_test_a;
  double l3_test_b;
};

inline const NoiseTable& noise_table(ModelId m) {
  static const std::array<NoiseTable, 20> tables = {{
      // l1_hi  l1t_lo l1t_hi l2m   l2t_a l2t_b l3c   l3t_a l3t_b
      {1.00, 0.0, 2.00, 0.50, 0.75, 0.75, 0.50, 1.50, 0.75},  // Linear
      {0.25, 0.0, 0.50, 0.20, 0.25, 0.25, 0.20, 0.50, 0.25},  // Diamond
      {0.50, 0.0, 0.50, 0.30, 0.25, 0.25, 0.30, 0.50, 0.25},  // Triangle
      {0.50, 0.0, 1.00, 0.30, 0.25, 0.25, 0.30, 0.50, 0.25},  // Crescent
      {0.00, 0.0, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00},  // Points (own rule)
      {0.50, 0.0, 2.00, 0.30, 0.50, 0.50, 0.30, 1.00, 0.50},  // Exponential
      {0.50, 0.0, 1.00, 0.30, 0.00, 0.50, 0.30, 0.50, 0.50},  // Circles
      {0.50, 0.0, 1.00, 0.30, 0.25, 0.25, 0.30, 0.50, 0.25},  // Cross
      {1.00, 2.0, 4.00, 0.50, 2.00, 1.00, 0.50, 2.00, 1.00},  // Wedge
      {0.25, 0.0, 1.00, 0.20, 0.25, 0.25, 0.20, 0.50, 0.25},  // Cubic
      {0.30, 0.0, 1.00, 0.20, 0.50, 0.50, 0.20, 1.00, 0.50},  // WShape
      {0.30, 0.0, 1.00, 0.20, 0.25, 0.25, 0.20, 0.50, 0.25},  // Parabola
      {0.40, 0.0, 1.00, 0.30, 0.25, 0.25, 0.30, 0.50, 0.25},  // TwoParabola
      {1.00, 0.0, 1.00, 0.50, 0.25, 0.25, 0.50, 0.50, 0.25},  // Sine
      {1.00, 0.0, 1.00, 0.50, 0.25, 0.25, 0.50, 0.50, 0.25},  // Doppler
      {1.00, 0.0, 1.00, 0.50, 0.25, 0.25, 0.50, 0.50, 0.25},  // HeavySine
      {0.50, 0.0, 1.00, 0.30, 0.25, 0.25, 0.30, 0.50, 0.25},  // Heart
      {0.30, 0.0, 0.50, 0.20, 0.10, 0.10, 0.20, 0.20, 0.10},  // Spiral
      {0.30, 0.0, 1.00, 0.20, 0.25, 0.25, 0.20, 0.50, 0.25},  // Taegeuk
      {0.30, 0.0, 1.00, 0.20, 0.25, 0.25, 0.20, 0.50, 0.25},  // Samtaegeuk
  }};
  return tables[static_cast<std::size_t>(static_cast<int>(m) - 1)];
}

inline SigmaRule sigma_rule(ModelId m, NoiseClass cls, Role role) {
  const NoiseTable& t = noise_table(m);
  SigmaRule r;
  switch (cls) {
    case NoiseClass::L1:
      r.kind = SigmaRule::kFixed;
      break;
    case NoiseClass::L2:
      if (role == Role::Train) {
        r.kind = SigmaRule::kProp;
        r.a = t.l2_mult;
      } else {
        r.kind = SigmaRule::kAffine;
        r.a = t.l2_test_a;
        r.b = t.l2_test_b;
      }
      break;
    case NoiseClass::L3:
      r.kind = SigmaRule::kComp;
      if (role == Role::Train) {
        r.a = t.l3_c;
        r.b = t.l3_c;
      } else {
        r.a = t.l3_test_a;
        r.b = t.l3_test_b;
      }
      break;
  }
  return r;
}

inline double l1_sigma_draw(Rng& rng, ModelId m, Role role) {
  const NoiseTable& t = noise_table(m);
  if (role == Role::Train) return rng.uniform(0.0, t.l1_train_hi);
  return rng.uniform(t.l1_test_lo, t.l1_test_hi);
}

inline void rotate(double theta, double x, double y, double& ox, double& oy) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  ox = c * x - s * y;
  oy = s * x + c * y;
}

inline int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace detail

inline BivariateSample gen_independent(int n, std::uint64_t seed) {
  if (n < 2) throw InvalidInputError("gen_independent: n must be >= 2");
  Rng rng(seed);
  BivariateSample s;
  s.z1.resize(static_cast<std::size_t>(n));
  s.z2.resize(static_cast<std::size_t>(n));
  for (double& x : s.z1) x = rng.uniform01();
  for (double& y : s.z2) y = rng.uniform01();
  return s;
}

// --- image masks ----------------------------------------------------------

// Grayscale mask; gray value 1 is white (never sampled), 0 is black.
// Sampling probability of pixel (i,j) is proportional to 1 - gray.
struct ImageMask {
  int width = 0;
  int height = 0;
  std::vector<double> gray;  // row-major: gray[j*width + i]

  void validate() const {
    if (width < 2 || height < 2) throw InvalidInputError("mask: dimensions must be >= 2");
    if (gray.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw InvalidInputError("mask: size mismatch");
    double dark = 0.0;
    for (const double v : gray) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidInputError("mask: gray values must lie in [0,1]");
      dark += 1.0 - v;
    }
    if (dark <= 0.0) throw InvalidInputError("mask: all-white image has no sampling mass");
  }
};

inline ImageMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError(path + ": not a binary (P5) PGM file");
  auto next_int = [&]() {
    int v;
    // skip whitespace and '#' comments
    while (true) {
      const int c = in.peek();
      if (c == '#') {
        std::string junk;
        std::getline(in, junk);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    if (!(in >> v)) throw DataError(path + ": malformed PGM header");
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw DataError(path + ": only 8-bit PGM supported");
  in.get();  // the single whitespace after maxval
  ImageMask m;
  m.width = w;
  m.height = h;
  m.gray.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int j = 0; j < h; ++j) {
    in.read(reinterpret_cast<char*>(row.data()), w);
    if (!in) throw DataError(path + ": truncated pixel data");
    for (int i = 0; i < w; ++i)
      m.gray[static_cast<std::size_t>(j) * static_cast<std::size_t>(w) + static_cast<std::size_t>(i)] =
          row[static_cast<std::size_t>(i)] / 255.0;
  }
  m.validate();
  return m;
}

inline void write_pgm(const std::string& path, const ImageMask& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "P5\n" << m.width << " " << m.height << "\n255\n";
  for (int j = 0; j < m.height; ++j)
    for (int i = 0; i < m.width; ++i) {
      const double v = m.gray[static_cast<std::size_t>(j) * static_cast<std::size_t>(m.width) +
                              static_cast<std::size_t>(i)];
      out.put(static_cast<char>(std::lround(v * 255.0)));
    }
}

namespace detail {

inline void stamp_disk(ImageMask& m, double cx, double cy, double radius) {
  const int ilo = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int ihi = std::min(m.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const int jlo = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int jhi = std::min(m.height - 1, static_cast<int>(std::ceil(cy + radius)));
  for (int j = jlo; j <= jhi; ++j)
    for (int i = ilo; i <= ihi; ++i) {
      const double dx = i - cx;
      const double dy = j - cy;
      if (dx * dx + dy * dy <= radius * radius)
        m.gray[static_cast<std::size_t>(j) * static_cast<std::size_t>(m.width) +
               static_cast<std::size_t>(i)] = 0.0;
    }
}

}  // namespace detail

// Lemniscate stroke on a 200x200 canvas.
inline const ImageMask& infinity_mask() {
  static const ImageMask mask = [] {
    ImageMask m;
    m.width = 200;
    m.height = 200;
    m.gray.assign(200 * 200, 1.0);
    const int steps = 4000;
    for (int s = 0; s < steps; ++s) {
      const double t = 2.0 * std::numbers::pi * s / steps;
      const double den = 1.0 + std::sin(t) * std::sin(t);
      const double x = std::cos(t) / den;
      const double y = std::sin(t) * std::cos(t) / den;
      detail::stamp_disk(m, 100.0 + 85.0 * x, 100.0 - 85.0 * y, 3.5);
    }
    return m;
  }();
  return mask;
}

// Pi glyph: top bar plus two legs.
inline const ImageMask& pi_mask() {
  static const ImageMask mask = [] {
    ImageMask m;
    m.width = 200;
    m.height = 200;
    m.gray.assign(200 * 200, 1.0);
    auto bar = [&](int ilo, int ihi, int jlo, int jhi) {
      for (int j = jlo; j <= jhi; ++j)
        for (int i = ilo; i <= ihi; ++i)
          m.gray[static_cast<std::size_t>(j) * 200 + static_cast<std::size_t>(i)] = 0.0;
    };
    bar(35, 165, 48, 60);    // horizontal stroke
    bar(62, 74, 61, 152);    // left leg
    bar(126, 138, 61, 152);  // right leg
    return m;
  }();
  return mask;
}

// Pixel-probability sampler: darkness-weighted pixel draws, centered
// coordinates, one fixed vertical-noise scale per sample, then a fresh
// rotation angle for every point.
// Draw order: pixel indices (n), sigma, then per point (eps_k, theta_k).
inline BivariateSample gen_from_image(const ImageMask& mask, int n, double sigma_max,
                                      std::uint64_t seed, GenParts* parts = nullptr) {
  mask.validate();
  if (n < 2) throw InvalidInputError("gen_from_image: n must be >= 2");
  if (sigma_max < 0.0) throw InvalidInputError("gen_from_image: sigma_max must be >= 0");
  const int p = mask.width;
  const int q = mask.height;
  std::vector<double> cum(mask.gray.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < mask.gray.size(); ++c) {
    acc += 1.0 - mask.gray[c];
    cum[c] = acc;
  }
  Rng rng(seed);
  std::vector<std::size_t> cells(static_cast<std::size_t>(n));
  for (auto& cell : cells) {
    const double target = rng.uniform01() * acc;
    cell = static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), target) - cum.begin());
    if (cell >= cum.size()) cell = cum.size() - 1;
  }
  const double sigma = rng.uniform(0.0, sigma_max);
  BivariateSample s;
  s.z1.resize(static_cast<std::size_t>(n));
  s.z2.resize(static_cast<std::size_t>(n));
  if (parts) {
    parts->struct_x.resize(static_cast<std::size_t>(n));
    parts->struct_y.resize(static_cast<std::size_t>(n));
    parts->rot_x.resize(static_cast<std::size_t>(n));
    parts->rot_y.resize(static_cast<std::size_t>(n));
    parts->point_thetas.resize(static_cast<std::size_t>(n));
  }
  for (int k = 0; k < n; ++k) {
    const std::size_t cell = cells[static_cast<std::size_t>(k)];
    const int i = static_cast<int>(cell % static_cast<std::size_t>(p)) + 1;  // 1-based column
    const int j = static_cast<int>(cell / static_cast<std::size_t>(p)) + 1;  // 1-based row
    const double x = (i - 0.5 * p) / p;
    const double y = -(j - 0.5 * q) / q;
    const double eps = rng.normal(0.0, sigma);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double zx;
    double zy;
    detail::rotate(theta, x, y + eps, zx, zy);
    s.z1[static_cast<std::size_t>(k)] = zx;
    s.z2[static_cast<std::size_t>(k)] = zy;
    if (parts) {
      parts->struct_x[static_cast<std::size_t>(k)] = x;
      parts->struct_y[static_cast<std::size_t>(k)] = y;
      parts->point_thetas[static_cast<std::size_t>(k)] = theta;
      detail::rotate(theta, x, y, parts->rot_x[static_cast<std::size_t>(k)],
                     parts->rot_y[static_cast<std::size_t>(k)]);
    }
  }
  return s;
}

namespace detail {

// Shared assembly for the rotated structural models. Draw order per sample:
// structural params (incl. theta), per-point latents, the L1 sigma if that
// class applies, then one normal per point.
struct StructuredDraw {
  std::vector<double> sx;
  std::vector<double> sy;
  double theta = 0.0;
  bool noise_before_rotation = true;
};

inline BivariateSample assemble(Rng& rng, const StructuredDraw& d, const SigmaRule& rule,
                                double fixed_sigma, GenParts* parts) {
  const std::size_t n = d.sx.size();
  BivariateSample s;
  s.z1.resize(n);
  s.z2.resize(n);
  if (parts) {
    parts->theta = d.theta;
    parts->struct_x = d.sx;
    parts->struct_y = d.sy;
    parts->rot_x.resize(n);
    parts->rot_y.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      rotate(d.theta, d.sx[k], d.sy[k], parts->rot_x[k], parts->rot_y[k]);
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (d.noise_before_rotation) {
      const double sig = rule.at(d.sx[k], fixed_sigma);
      const double eps = rng.normal(0.0, sig);
      rotate(d.theta, d.sx[k], d.sy[k] + eps, s.z1[k], s.z2[k]);
    } else {
      double rx;
      double ry;
      rotate(d.theta, d.sx[k], d.sy[k], rx, ry);
      const double sig = rule.at(rx, fixed_sigma);
      const double eps = rng.normal(0.0, sig);
      s.z1[k] = rx;
      s.z2[k] = ry + eps;
    }
  }
  return s;
}

}  // namespace detail

inline BivariateSample gen_model(const GenSpec& spec, GenParts* parts = nullptr) {
  const int mid = static_cast<int>(spec.model);
  if (spec.model == ModelId::Independent) return gen_independent(spec.n, spec.seed);
  if (spec.n < 2) throw InvalidInputError("gen_model: n must be >= 2");
  const bool training_family = mid >= 1 && mid <= 20;
  if (training_family) {
    if (!spec.noise_class) throw InvalidInputError("gen_model: models 1-20 need a noise class");
    if (spec.variant) throw InvalidInputError("gen_model: variant applies to models 21-26 only");
  } else {
    if (!spec.variant) throw InvalidInputError("gen_model: models 21-26 need a variant");
    if (spec.noise_class) throw InvalidInputError("gen_model: noise class applies to models 1-20 only");
  }
  const std::size_t n = static_cast<std::size_t>(spec.n);
  Rng rng(spec.seed);
  const double two_pi = 2.0 * std::numbers::pi;

  if (training_family) {
    const NoiseClass cls = *spec.noise_class;
    const detail::SigmaRule rule = detail::sigma_rule(spec.model, cls, spec.role);
    detail::StructuredDraw d;
    d.sx.resize(n);
    d.sy.resize(n);
    const bool test_role = spec.role == Role::Test;

    switch (spec.model) {
      case ModelId::Linear: {
        const bool neg = rng.uniform01() < 0.5;
        const double beta = neg ? rng.uniform(-2.0, -0.5) : rng.uniform(0.5, 2.0);
        for (std::size_t k = 0; k < n; ++k) {
          d.sx[k] = rng.uniform(-1.0, 1.0);
          d.sy[k] = beta * d.sx[k];
        }
        d.theta = 0.0;
        d.noise_before_rotation = false;  // no rotation at all
        break;
      }
      case ModelId::Diamond: {
        d.theta = rng.uniform(std::numbers::pi / 6.0, std::numbers::pi / 3.0);
        for (std::size_t k = 0; k < n; ++k) {
          d.sx[k] = rng.uniform(-1.0, 1.0);
          d.sy[k] = rng.uniform(-1.0, 1.0);
        }
        d.noise_before_rotation = false;
        break;
      }
      case ModelId::Triangle: {
        d.theta = rng.uniform(0.0, two_pi);
        const double l = rng.uniform(0.0, 1.0);
        const double r = rng.uniform(0.0, 1.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform01();
          const double v = rng.uniform(-l, r);
          d.sx[k] = u * v;
          d.sy[k] = u;
        }
        d.noise_before_rotation = true;
        break;
      }
      case ModelId::Crescent: {
        d.theta = rng.uniform(0.0, two_pi);
        const double c = test_role ? rng.uniform(0.25, 1.0) : rng.uniform(0.5, 1.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double v = rng.uniform(-1.0, c / 2.0);
          const double outer = std::sqrt(std::max(0.0, 1.0 - v * v));
          double u;
          if (v < c - 1.0) {
            u = rng.uniform(-outer, outer);
          } else {
            const double inner = std::sqrt(std::max(0.0, 1.0 - (v - c) * (v - c)));
            u = rng.uniform01() < 0.5 ? rng.uniform(-outer, -inner) : rng.uniform(inner, outer);
          }
          d.sx[k] = u;
          d.sy[k] = v;
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Points:
      case ModelId::Circles: {
        d.theta = rng.uniform(0.0, two_pi);
        static const std::vector<std::vector<std::pair<double, double>>> point_sets = {
            {{1, 0}, {-1, 0}, {0, 1}},
            {{1, 0}, {-1, 0}, {0, 0}, {0, 1}, {0, -1}},
            {{1, 1}, {-1, 1}, {0, 0}, {1, -1}, {-1, -1}},
        };
        static const std::vector<std::vector<std::pair<double, double>>> circle_sets = {
            {{0, 0}},
            {{1, 0}, {-1, 0}, {0, 1}},
            {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}},
        };
        const bool circles = spec.model == ModelId::Circles;
        const auto& sets = circles ? circle_sets : point_sets;
        const auto& set = sets[rng.uniform_index(3)];
        // pool of n center pairs, then per-point resampling by shared index
        std::vector<std::pair<double, double>> pool(n);
        for (auto& pt : pool) pt = set[rng.uniform_index(set.size())];
        if (parts) {
          parts->center_x.resize(n);
          parts->center_y.resize(n);
        }
        if (circles) {
          for (std::size_t k = 0; k < n; ++k) {
            const double w = rng.uniform(-1.0, 1.0);
            const auto [cx, cy] = pool[rng.uniform_index(n)];
            d.sx[k] = std::sin(std::numbers::pi * w) + cx;
            d.sy[k] = std::cos(std::numbers::pi * w) + cy;
            if (parts) {
              parts->center_x[k] = cx;
              parts->center_y[k] = cy;
            }
          }
          d.noise_before_rotation = true;
          break;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const auto [cx, cy] = pool[rng.uniform_index(n)];
          d.sx[k] = cx;
          d.sy[k] = cy;
          if (parts) {
            parts->center_x[k] = cx;
            parts->center_y[k] = cy;
          }
        }
        // Points adds noise to both coordinates, then rotates.
        const double sigma = rng.uniform(0.05, 0.5);
        BivariateSample s;
        s.z1.resize(n);
        s.z2.resize(n);
        if (parts) {
          parts->theta = d.theta;
          parts->struct_x = d.sx;
          parts->struct_y = d.sy;
          parts->rot_x.resize(n);
          parts->rot_y.resize(n);
          for (std::size_t k = 0; k < n; ++k)
            detail::rotate(d.theta, d.sx[k], d.sy[k], parts->rot_x[k], parts->rot_y[k]);
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double e1 = rng.normal(0.0, sigma);
          const double e2 = rng.normal(0.0, sigma);
          detail::rotate(d.theta, d.sx[k] + e1, d.sy[k] + e2, s.z1[k], s.z2[k]);
        }
        return s;
      }
      case ModelId::Exponential: {
        d.theta = rng.uniform(0.0, two_pi);
        const double b = (cls == NoiseClass::L3 && !test_role) ? rng.uniform(1.5, 3.0)
                                                               : rng.uniform(2.0, 4.0);
        for (std::size_t k = 0; k < n; ++k) {
          d.sx[k] = rng.uniform(-1.0, 1.0);
          d.sy[k] = std::pow(b, d.sx[k]);
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Cross: {
        d.theta = rng.uniform(-std::numbers::pi / 6.0, std::numbers::pi / 6.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          const double w = rng.uniform01() < 0.5 ? -1.0 : 1.0;
          d.sx[k] = u;
          d.sy[k] = w * u;
        }
        d.noise_before_rotation = false;
        break;
      }
      case ModelId::Wedge: {
        d.theta = rng.uniform(-std::numbers::pi / 6.0, std::numbers::pi / 6.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          const double w = rng.uniform01() < 0.5 ? -1.0 : 1.0;
          d.sx[k] = u;
          d.sy[k] = 2.0 * (u + 1.0) * w;
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Cubic: {
        d.theta = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          d.sx[k] = u;
          d.sy[k] = u * u * u - u;
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::WShape: {
        d.theta = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          d.sx[k] = u;
          d.sy[k] = 4.0 * (u * u - 0.5) * (u * u - 0.5);
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Parabola: {
        d.theta = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          d.sx[k] = u;
          d.sy[k] = 0.5 * u * u;
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::TwoParabola: {
        d.theta = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          const double w = rng.uniform01() < 0.5 ? -1.0 : 1.0;
          d.sx[k] = u;
          d.sy[k] = w * u * u;
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Sine: {
        d.theta = rng.uniform(0.0, two_pi);
        const double freq = rng.uniform(1.0, 4.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          d.sx[k] = u;
          d.sy[k] = std::sin(freq * std::numbers::pi * u);
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Doppler: {
        d.theta = rng.uniform(0.0, two_pi);
        const double f = rng.uniform(2.0, 4.0);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          d.sx[k] = u;
          d.sy[k] = std::sin(-f * (1.0 + u) * (2.0 + u));
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::HeavySine: {
        d.theta = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < n; ++k) {
          const double u = rng.uniform(-1.0, 1.0);
          d.sx[k] = u;
          d.sy[k] = 0.5 * std::sin(4.0 * std::numbers::pi * u) - detail::sign_of(u + 0.6) / 8.0 -
                    detail::sign_of(u + 0.2) / 8.0 - detail::sign_of(u - 0.2) / 8.0 -
                    detail::sign_of(u - 0.6) / 8.0;
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Heart: {
        d.theta = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < n; ++k) {
          const double w = rng.uniform(-1.0, 1.0);
          d.sx[k] = 0.5 * (2.0 * std::cos(std::numbers::pi * w) - std::cos(2.0 * std::numbers::pi * w));
          d.sy[k] = 0.5 * (2.0 * std::sin(std::numbers::pi * w) - std::sin(2.0 * std::numbers::pi * w));
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Spiral: {
        d.theta = rng.uniform(0.0, two_pi);
        const double turns = rng.uniform(2.5, 3.5);
        for (std::size_t k = 0; k < n; ++k) {
          const double w = rng.uniform(-turns * std::numbers::pi, turns * std::numbers::pi);
          const double radius = std::exp(-w / 10.0);
          d.sx[k] = radius * std::cos(w);
          d.sy[k] = radius * std::sin(w);
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Taegeuk: {
        d.theta = rng.uniform(0.0, two_pi);
        for (std::size_t k = 0; k < n; ++k) {
          const double w = rng.uniform(-1.0, 1.0);
          const double coin = rng.uniform01();
          const double delta = coin < 0.5 ? 0.0 : (coin < 0.75 ? -1.0 : 1.0);
          const double ad = std::abs(delta);
          d.sx[k] = std::pow(0.5, ad) * std::sin(std::numbers::pi * w) + 0.5 * delta;
          d.sy[k] = std::abs(0.5 * std::cos(std::numbers::pi * w)) * delta +
                    std::cos(std::numbers::pi * w) * (1.0 - ad);
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      case ModelId::Samtaegeuk: {
        d.theta = rng.uniform(0.0, two_pi);
        const double third = std::numbers::pi / 2.0 + std::numbers::pi / 6.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double w = rng.uniform(-1.0, 1.0);
          const double coin = rng.uniform01();
          const int delta = coin < 0.5 ? 0 : (coin < 2.0 / 3.0 ? 1 : (coin < 5.0 / 6.0 ? 2 : 3));
          const double hw = w * std::numbers::pi / 2.0;
          switch (delta) {
            case 0:
              d.sx[k] = std::cos(w * std::numbers::pi);
              d.sy[k] = std::sin(w * std::numbers::pi);
              break;
            case 1:
              d.sx[k] = 0.5 * std::cos(hw);
              d.sy[k] = 0.5 * std::sin(hw) - 0.5;
              break;
            case 2:
              d.sx[k] = 0.5 * std::cos(hw + third) + std::sqrt(3.0) / 4.0;
              d.sy[k] = 0.5 * std::sin(hw + third) + 0.25;
              break;
            default:
              d.sx[k] = 0.5 * std::cos(-hw - third) - std::sqrt(3.0) / 4.0;
              d.sy[k] = 0.5 * std::sin(-hw - third) + 0.25;
              break;
          }
        }
        d.noise_before_rotation = !test_role;
        break;
      }
      default:
        throw InvalidInputError("gen_model: unhandled model");
    }

    const double fixed_sigma =
        cls == NoiseClass::L1 ? detail::l1_sigma_draw(rng, spec.model, spec.role) : 0.0;
    return detail::assemble(rng, d, rule, fixed_sigma, parts);
  }

  // --- held-out family ----------------------------------------------------
  const bool variant_b = *spec.variant == Variant::B;
  BivariateSample s;
  s.z1.resize(n);
  s.z2.resize(n);
  switch (spec.model) {
    case ModelId::Laplace: {
      const double rho = variant_b ? rng.uniform(0.5, 0.6) : rng.uniform(0.4, 0.5);
      const double chol = std::sqrt(1.0 - rho * rho);
      for (std::size_t k = 0; k < n; ++k) {
        const double w = rng.exponential(1.0);
        const double g1 = rng.normal();
        const double g2 = rng.normal();
        const double scale = std::sqrt(w);
        s.z1[k] = scale * g1;
        s.z2[k] = scale * (rho * g1 + chol * g2);
      }
      break;
    }
    case ModelId::Ishigami: {
      const double sigma =
          variant_b ? rng.uniform(std::numbers::pi, 3.0 * std::numbers::pi) : rng.uniform(0.5, 1.5);
      for (std::size_t k = 0; k < n; ++k) {
        const double z1 = rng.uniform01();
        const double v = rng.uniform01();
        const double w = rng.uniform01();
        const double eps = rng.normal(0.0, sigma);
        s.z1[k] = z1;
        s.z2[k] = std::sin(z1) + 4.0 * std::sin(v) * std::sin(v) +
                  0.5 * w * w * w * w * std::sin(z1) + eps;
      }
      break;
    }
    case ModelId::TreeRing: {
      const auto rmax = rng.uniform_int(2, 10);
      const auto radius = static_cast<double>(rng.uniform_int(1, rmax));
      const double sigma = variant_b ? rng.uniform(0.0, 1.0) : rng.uniform(0.0, 0.5);
      if (parts) {
        parts->struct_x.resize(n);
        parts->struct_y.resize(n);
      }
      for (std::size_t k = 0; k < n; ++k) {
        const double theta = rng.uniform(0.0, two_pi);
        const double v1 = rng.normal(0.0, sigma);
        const double v2 = rng.normal(0.0, sigma);
        s.z1[k] = radius * std::cos(theta) + v1 / 4.0;
        s.z2[k] = radius * std::sin(theta) + v2 / 4.0;
        if (parts) {
          parts->struct_x[k] = radius * std::cos(theta);
          parts->struct_y[k] = radius * std::sin(theta);
        }
      }
      break;
    }
    case ModelId::Variance: {
      const double power = variant_b ? rng.uniform(0.5, 0.6) : rng.uniform(0.4, 0.5);
      for (std::size_t k = 0; k < n; ++k) {
        const double z1 = rng.uniform01();
        const double v = rng.normal();
        s.z1[k] = z1;
        s.z2[k] = std::pow(std::abs(z1), power) * v;
      }
      break;
    }
    case ModelId::Infinity:
      return gen_from_image(infinity_mask(), spec.n, variant_b ? 0.2 : 0.1, spec.seed, parts);
    case ModelId::Pi:
      return gen_from_image(pi_mask(), spec.n, variant_b ? 1.0 : 0.5, spec.seed, parts);
    default:
      throw InvalidInputError("gen_model: unhandled model");
  }
  return s;
}

// --- corpus construction --------------------------------------------------

struct CorpusEntry {
  ModelId model = ModelId::Independent;
  int n = 0;
  Role role = Role::Train;
  std::optional<NoiseClass> noise_class;
  std::optional<Variant> variant;
  std::uint64_t seed = 0;
  int label = 0;
};

// Balanced labeled corpus: per size, `per_model` dependent samples from each
// of models 1..20 (noise classes in 60/20/20 proportion) and the same total
// number of independent samples.
inline std::vector<CorpusEntry> build_corpus(const std::vector<int>& sizes, int per_model, Role role,
                                             std::uint64_t seed) {
  if (per_model < 1) throw InvalidInputError("build_corpus: per_model must be >= 1");
  if (sizes.empty()) throw InvalidInputError("build_corpus: no sizes given");
  std::vector<CorpusEntry> entries;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const int n = sizes[si];
    for (int m = 1; m <= 20; ++m) {
      const int n1 = static_cast<int>(std::lround(0.6 * per_model));
      const int n2 = static_cast<int>(std::lround(0.2 * per_model));
      const int n3 = per_model - n1 - n2;
      const std::array<int, 3> counts = {n1, n2, n3};
      int rep = 0;
      for (int cls = 0; cls < 3; ++cls) {
        for (int c = 0; c < counts[static_cast<std::size_t>(cls)]; ++c, ++rep) {
          CorpusEntry e;
          e.model = static_cast<ModelId>(m);
          e.n = n;
          e.role = role;
          e.noise_class = static_cast<NoiseClass>(cls + 1);
          e.seed = split_seed(seed, "corpus-dep", si, static_cast<std::uint64_t>(m),
                              static_cast<std::uint64_t>(rep));
          e.label = 1;
          entries.push_back(e);
        }
      }
    }
    for (int r = 0; r < 20 * per_model; ++r) {
      CorpusEntry e;
      e.model = ModelId::Independent;
      e.n = n;
      e.role = role;
      e.seed = split_seed(seed, "corpus-indep", si, static_cast<std::uint64_t>(r));
      e.label = 0;
      entries.push_back(e);
    }
  }
  return entries;
}

inline BivariateSample gen_entry(const CorpusEntry& e, GenParts* parts = nullptr) {
  GenSpec spec;
  spec.model = e.model;
  spec.n = e.n;
  spec.role = e.role;
  spec.noise_class = e.noise_class;
  spec.variant = e.variant;
  spec.seed = e.seed;
  return gen_model(spec, parts);
}

}  // namespace deeptest
