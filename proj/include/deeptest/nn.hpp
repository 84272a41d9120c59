#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "deeptest/errors.hpp"
#include "deeptest/numeric.hpp"
#include "deeptest/rng.hpp"

namespace deeptest {

enum class ArchitectureTag { AllMlp, AllCnn, AllCnnMlp };

inline const char* architecture_name(ArchitectureTag t) {
  switch (t) {
    case ArchitectureTag::AllMlp: return "all-mlp";
    case ArchitectureTag::AllCnn: return "all-cnn";
    case ArchitectureTag::AllCnnMlp: return "all-cnn-mlp";
  }
  return "?";
}

inline ArchitectureTag architecture_from_name(const std::string& s) {
  if (s == "all-mlp") return ArchitectureTag::AllMlp;
  if (s == "all-cnn") return ArchitectureTag::AllCnn;
  if (s == "all-cnn-mlp") return ArchitectureTag::AllCnnMlp;
  throw InvalidInputError("unknown architecture: " + s);
}

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  int batch_size = 128;
  int max_epochs = 50;
  double val_split = 0.2;
  int early_stop_patience = 3;
  double plateau_factor = 0.5;
  int plateau_patience = 2;
  double min_lr = 1e-6;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> train_acc;
  std::vector<double> val_loss;
  std::vector<double> val_acc;
  std::vector<double> lr;
  int epochs_run = 0;
};

struct Metrics {
  double auc = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// One training/evaluation unit. `image` is the 625-value column-major grid
// (empty when the architecture ignores it); `indicators` the 20-vector.
struct Example {
  std::vector<double> image;
  std::vector<double> indicators;
  int label = 0;
};

using Dataset = std::vector<Example>;

// --- layers -----------------------------------------------------------------

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;
};

struct ConvLayer {
  int cin = 0;
  int cout = 0;
  std::vector<double> w;  // [ky][kx][cin][cout]
  std::vector<double> b;
};

// Feature maps are stored channel-major with column-major planes:
// value(c, x, y) = data[c*h*w + x*h + y]. The 625-long input image in
// column-major order is exactly the single-channel layout, and flattening is
// the identity on this buffer.

namespace nn_detail {

inline void dense_forward(const DenseLayer& l, const double* x, double* y) {
  for (int o = 0; o < l.out; ++o) {
    double acc = l.b[static_cast<std::size_t>(o)];
    const double* row = l.w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
    for (int i = 0; i < l.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

inline void dense_backward(const DenseLayer& l, const double* x, const double* dy, double* dx,
                           double* gw, double* gb) {
  if (dx) std::fill(dx, dx + l.in, 0.0);
  for (int o = 0; o < l.out; ++o) {
    const double g = dy[o];
    gb[o] += g;
    const double* row = l.w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
    double* grow = gw + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
    for (int i = 0; i < l.in; ++i) {
      grow[i] += g * x[i];
      if (dx) dx[i] += g * row[i];
    }
  }
}

// 3x3 convolution, stride 1, same (zero) padding.
inline void conv_forward(const ConvLayer& l, const double* x, int h, int w, double* y) {
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  for (int co = 0; co < l.cout; ++co) {
    double* out = y + static_cast<std::size_t>(co) * plane;
    for (int cx = 0; cx < w; ++cx)
      for (int cy = 0; cy < h; ++cy) out[static_cast<std::size_t>(cx) * h + cy] = l.b[static_cast<std::size_t>(co)];
  }
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      for (int ci = 0; ci < l.cin; ++ci) {
        const double* in = x + static_cast<std::size_t>(ci) * plane;
        const double* wk =
            l.w.data() + ((static_cast<std::size_t>(ky) * 3 + kx) * l.cin + ci) * l.cout;
        for (int cx = 0; cx < w; ++cx) {
          const int sx = cx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          for (int cy = 0; cy < h; ++cy) {
            const int sy = cy + ky - 1;
            if (sy < 0 || sy >= h) continue;
            const double xin = in[static_cast<std::size_t>(sx) * h + sy];
            for (int co = 0; co < l.cout; ++co)
              y[static_cast<std::size_t>(co) * plane + static_cast<std::size_t>(cx) * h + cy] +=
                  xin * wk[co];
          }
        }
      }
    }
  }
}

inline void conv_backward(const ConvLayer& l, const double* x, int h, int w, const double* dy,
                          double* dx, double* gw, double* gb) {
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  if (dx) std::fill(dx, dx + static_cast<std::size_t>(l.cin) * plane, 0.0);
  for (int co = 0; co < l.cout; ++co) {
    const double* dout = dy + static_cast<std::size_t>(co) * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += dout[i];
    gb[co] += acc;
  }
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      for (int ci = 0; ci < l.cin; ++ci) {
        const double* in = x + static_cast<std::size_t>(ci) * plane;
        double* dxp = dx ? dx + static_cast<std::size_t>(ci) * plane : nullptr;
        const double* wk =
            l.w.data() + ((static_cast<std::size_t>(ky) * 3 + kx) * l.cin + ci) * l.cout;
        double* gwk = gw + ((static_cast<std::size_t>(ky) * 3 + kx) * l.cin + ci) * l.cout;
        for (int cx = 0; cx < w; ++cx) {
          const int sx = cx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          for (int cy = 0; cy < h; ++cy) {
            const int sy = cy + ky - 1;
            if (sy < 0 || sy >= h) continue;
            const double xin = in[static_cast<std::size_t>(sx) * h + sy];
            for (int co = 0; co < l.cout; ++co) {
              const double g = dy[static_cast<std::size_t>(co) * plane +
                                  static_cast<std::size_t>(cx) * h + cy];
              gwk[co] += g * xin;
              if (dxp) dxp[static_cast<std::size_t>(sx) * h + sy] += g * wk[co];
            }
          }
        }
      }
    }
  }
}

// 3x3 max pooling with stride 3, no padding.
inline void maxpool_forward(const double* x, int h, int w, int c, double* y, int* argmax) {
  const int oh = (h - 3) / 3 + 1;
  const int ow = (w - 3) / 3 + 1;
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const std::size_t oplane = static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow);
  for (int ci = 0; ci < c; ++ci) {
    const double* in = x + static_cast<std::size_t>(ci) * plane;
    for (int ox = 0; ox < ow; ++ox) {
      for (int oy = 0; oy < oh; ++oy) {
        double best = -std::numeric_limits<double>::infinity();
        int besti = 0;
        for (int dx = 0; dx < 3; ++dx)
          for (int dy = 0; dy < 3; ++dy) {
            const int sx = ox * 3 + dx;
            const int sy = oy * 3 + dy;
            const int idx = sx * h + sy;
            if (in[idx] > best) {
              best = in[idx];
              besti = idx;
            }
          }
        const std::size_t oidx =
            static_cast<std::size_t>(ci) * oplane + static_cast<std::size_t>(ox) * oh + oy;
        y[oidx] = best;
        argmax[oidx] = besti;
      }
    }
  }
}

inline void maxpool_backward(const double* dy, const int* argmax, int h, int w, int c, double* dx) {
  const int oh = (h - 3) / 3 + 1;
  const int ow = (w - 3) / 3 + 1;
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const std::size_t oplane = static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow);
  std::fill(dx, dx + static_cast<std::size_t>(c) * plane, 0.0);
  for (int ci = 0; ci < c; ++ci)
    for (std::size_t o = 0; o < oplane; ++o) {
      const std::size_t oidx = static_cast<std::size_t>(ci) * oplane + o;
      dx[static_cast<std::size_t>(ci) * plane + static_cast<std::size_t>(argmax[oidx])] += dy[oidx];
    }
}

}  // namespace nn_detail

// The three fixed architectures plus freely sized variants for testing.
struct NetworkModel {
  ArchitectureTag tag = ArchitectureTag::AllMlp;
  int image_h = 25;
  int image_w = 25;
  bool has_conv = false;
  bool has_score_embed = false;
  ConvLayer conv1;
  ConvLayer conv2;
  DenseLayer score_embed;
  std::vector<DenseLayer> trunk;  // last layer is the sigmoid head
  std::vector<bool> trunk_dropout;
  double dropout_rate = 0.2;

  int trainable_parameters() const {
    std::size_t c = 0;
    if (has_conv) c += conv1.w.size() + conv1.b.size() + conv2.w.size() + conv2.b.size();
    if (has_score_embed) c += score_embed.w.size() + score_embed.b.size();
    for (const auto& l : trunk) c += l.w.size() + l.b.size();
    return static_cast<int>(c);
  }

  int pool_h() const { return (image_h - 3) / 3 + 1; }
  int pool_w() const { return (image_w - 3) / 3 + 1; }
  int flatten_width() const { return has_conv ? pool_h() * pool_w() * conv2.cout : 0; }

  std::vector<std::vector<double>*> param_arrays() {
    std::vector<std::vector<double>*> out;
    if (has_conv) {
      out.push_back(&conv1.w);
      out.push_back(&conv1.b);
      out.push_back(&conv2.w);
      out.push_back(&conv2.b);
    }
    if (has_score_embed) {
      out.push_back(&score_embed.w);
      out.push_back(&score_embed.b);
    }
    for (auto& l : trunk) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    return out;
  }
  std::vector<const std::vector<double>*> param_arrays() const {
    auto* self = const_cast<NetworkModel*>(this);
    std::vector<const std::vector<double>*> out;
    for (auto* p : self->param_arrays()) out.push_back(p);
    return out;
  }
};

namespace nn_detail {

inline void glorot_init(std::vector<double>& w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& x : w) x = rng.uniform(-limit, limit);
}

inline DenseLayer make_dense(int in, int out, Rng& rng) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  l.w.resize(static_cast<std::size_t>(in) * static_cast<std::size_t>(out));
  l.b.assign(static_cast<std::size_t>(out), 0.0);
  glorot_init(l.w, in, out, rng);
  return l;
}

inline ConvLayer make_conv(int cin, int cout, Rng& rng) {
  ConvLayer l;
  l.cin = cin;
  l.cout = cout;
  l.w.resize(9 * static_cast<std::size_t>(cin) * static_cast<std::size_t>(cout));
  l.b.assign(static_cast<std::size_t>(cout), 0.0);
  glorot_init(l.w, 9 * cin, 9 * cout, rng);
  return l;
}

}  // namespace nn_detail

inline NetworkModel build_architecture(ArchitectureTag tag, std::uint64_t seed) {
  NetworkModel m;
  m.tag = tag;
  Rng rng(split_seed(seed, "init"));
  switch (tag) {
    case ArchitectureTag::AllMlp:
      m.trunk.push_back(nn_detail::make_dense(20, 32, rng));
      m.trunk.push_back(nn_detail::make_dense(32, 32, rng));
      m.trunk.push_back(nn_detail::make_dense(32, 1, rng));
      m.trunk_dropout = {true, true, false};
      break;
    case ArchitectureTag::AllCnn:
      m.has_conv = true;
      m.conv1 = nn_detail::make_conv(1, 32, rng);
      m.conv2 = nn_detail::make_conv(32, 32, rng);
      m.trunk.push_back(nn_detail::make_dense(2048, 256, rng));
      m.trunk.push_back(nn_detail::make_dense(256, 128, rng));
      m.trunk.push_back(nn_detail::make_dense(128, 1, rng));
      m.trunk_dropout = {true, true, false};
      break;
    case ArchitectureTag::AllCnnMlp:
      m.has_conv = true;
      m.has_score_embed = true;
      m.conv1 = nn_detail::make_conv(1, 32, rng);
      m.conv2 = nn_detail::make_conv(32, 32, rng);
      m.score_embed = nn_detail::make_dense(20, 32, rng);
      m.trunk.push_back(nn_detail::make_dense(2080, 256, rng));
      m.trunk.push_back(nn_detail::make_dense(256, 128, rng));
      m.trunk.push_back(nn_detail::make_dense(128, 32, rng));
      m.trunk.push_back(nn_detail::make_dense(32, 1, rng));
      m.trunk_dropout = {true, true, false, false};
      break;
  }
  return m;
}

enum class Mode { Train, Infer };

// Per-sample activation caches; reusable across samples within one thread.
struct Workspace {
  std::vector<double> conv1_pre, conv1_act, conv2_pre, conv2_act;
  std::vector<double> pool_out;
  std::vector<int> pool_arg;
  std::vector<double> pool_drop;
  std::vector<std::uint8_t> pool_mask;
  std::vector<double> score_pre, score_act;
  std::vector<double> trunk_in;
  std::vector<std::vector<double>> pre, act, drop;
  std::vector<std::vector<std::uint8_t>> mask;
  // backward scratch
  std::vector<double> d_a, d_b, d_img1, d_img2, d_pool, d_flat, d_in;
};

namespace nn_detail {

// Dropout mask streams are derived from (seed, layer, sample); train() feeds
// a per-(epoch,batch) seed so every mask in a run is pinned down.
inline void dropout_apply(const double* x, std::size_t n, double rate, std::uint64_t seed,
                          int layer_id, std::uint64_t sample_id, double* y, std::uint8_t* mask) {
  Rng rng(split_seed(seed, "dropout", static_cast<std::uint64_t>(layer_id), sample_id));
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep = rng.uniform01() >= rate;
    mask[i] = keep;
    y[i] = keep ? x[i] * scale : 0.0;
  }
}

// Forward pass; in train mode stores every intermediate needed by backward.
inline double forward_impl(const NetworkModel& m, const Example& ex, Mode mode, std::uint64_t seed,
                           std::uint64_t sample_id, Workspace& ws) {
  const bool train = mode == Mode::Train;
  const double rate = m.dropout_rate;
  const double* trunk_input = nullptr;
  int trunk_in_width = 0;

  if (m.has_conv) {
    const int h = m.image_h;
    const int w = m.image_w;
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    if (ex.image.size() != plane)
      throw InvalidInputError("forward: image input has wrong size");
    ws.conv1_pre.resize(plane * static_cast<std::size_t>(m.conv1.cout));
    ws.conv1_act.resize(ws.conv1_pre.size());
    conv_forward(m.conv1, ex.image.data(), h, w, ws.conv1_pre.data());
    for (std::size_t i = 0; i < ws.conv1_pre.size(); ++i)
      ws.conv1_act[i] = ws.conv1_pre[i] > 0.0 ? ws.conv1_pre[i] : 0.0;
    ws.conv2_pre.resize(plane * static_cast<std::size_t>(m.conv2.cout));
    ws.conv2_act.resize(ws.conv2_pre.size());
    conv_forward(m.conv2, ws.conv1_act.data(), h, w, ws.conv2_pre.data());
    for (std::size_t i = 0; i < ws.conv2_pre.size(); ++i)
      ws.conv2_act[i] = ws.conv2_pre[i] > 0.0 ? ws.conv2_pre[i] : 0.0;
    const std::size_t flat = static_cast<std::size_t>(m.flatten_width());
    ws.pool_out.resize(flat);
    ws.pool_arg.resize(flat);
    maxpool_forward(ws.conv2_act.data(), h, w, m.conv2.cout, ws.pool_out.data(), ws.pool_arg.data());
    ws.pool_drop.resize(flat);
    ws.pool_mask.resize(flat);
    if (train) {
      dropout_apply(ws.pool_out.data(), flat, rate, seed, 0, sample_id, ws.pool_drop.data(),
                    ws.pool_mask.data());
    } else {
      std::copy(ws.pool_out.begin(), ws.pool_out.end(), ws.pool_drop.begin());
    }
  }

  if (m.has_score_embed) {
    if (static_cast<int>(ex.indicators.size()) != m.score_embed.in)
      throw InvalidInputError("forward: indicator input has wrong size");
    ws.score_pre.resize(static_cast<std::size_t>(m.score_embed.out));
    ws.score_act.resize(ws.score_pre.size());
    dense_forward(m.score_embed, ex.indicators.data(), ws.score_pre.data());
    for (std::size_t i = 0; i < ws.score_pre.size(); ++i)
      ws.score_act[i] = ws.score_pre[i] > 0.0 ? ws.score_pre[i] : 0.0;
    // concatenate image embedding and score embedding
    ws.trunk_in.resize(static_cast<std::size_t>(m.flatten_width()) + ws.score_act.size());
    std::copy(ws.pool_drop.begin(), ws.pool_drop.end(), ws.trunk_in.begin());
    std::copy(ws.score_act.begin(), ws.score_act.end(),
              ws.trunk_in.begin() + static_cast<std::ptrdiff_t>(m.flatten_width()));
    trunk_input = ws.trunk_in.data();
    trunk_in_width = static_cast<int>(ws.trunk_in.size());
  } else if (m.has_conv) {
    trunk_input = ws.pool_drop.data();
    trunk_in_width = m.flatten_width();
  } else {
    if (static_cast<int>(ex.indicators.size()) != m.trunk.front().in)
      throw InvalidInputError("forward: indicator input has wrong size");
    trunk_input = ex.indicators.data();
    trunk_in_width = static_cast<int>(ex.indicators.size());
  }
  (void)trunk_in_width;

  const std::size_t depth = m.trunk.size();
  ws.pre.resize(depth);
  ws.act.resize(depth);
  ws.drop.resize(depth);
  ws.mask.resize(depth);
  const double* cur = trunk_input;
  for (std::size_t li = 0; li < depth; ++li) {
    const DenseLayer& l = m.trunk[li];
    ws.pre[li].resize(static_cast<std::size_t>(l.out));
    dense_forward(l, cur, ws.pre[li].data());
    if (li + 1 == depth) break;  // sigmoid head handled below
    ws.act[li].resize(static_cast<std::size_t>(l.out));
    for (int i = 0; i < l.out; ++i)
      ws.act[li][static_cast<std::size_t>(i)] =
          ws.pre[li][static_cast<std::size_t>(i)] > 0.0 ? ws.pre[li][static_cast<std::size_t>(i)] : 0.0;
    if (m.trunk_dropout[li]) {
      ws.drop[li].resize(static_cast<std::size_t>(l.out));
      ws.mask[li].resize(static_cast<std::size_t>(l.out));
      if (train) {
        dropout_apply(ws.act[li].data(), static_cast<std::size_t>(l.out), rate, seed,
                      static_cast<int>(li) + 1, sample_id, ws.drop[li].data(), ws.mask[li].data());
      } else {
        ws.drop[li] = ws.act[li];
      }
      cur = ws.drop[li].data();
    } else {
      cur = ws.act[li].data();
    }
  }
  const double z = ws.pre[depth - 1][0];
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace nn_detail

inline double forward(const NetworkModel& m, const Example& ex, Mode mode, std::uint64_t seed = 0) {
  Workspace ws;
  return nn_detail::forward_impl(m, ex, mode, seed, 0, ws);
}

// Gradient buffers mirroring NetworkModel::param_arrays().
struct Gradients {
  std::vector<std::vector<double>> g;

  explicit Gradients(const NetworkModel& m) {
    for (const auto* p : m.param_arrays()) g.emplace_back(p->size(), 0.0);
  }
  void zero() {
    for (auto& a : g) std::fill(a.begin(), a.end(), 0.0);
  }
  void add(const Gradients& other) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] += other.g[i][j];
  }
  void scale(double s) {
    for (auto& a : g)
      for (double& x : a) x *= s;
  }
};

inline constexpr double kScoreClamp = 1e-7;

inline double bce_loss(double score, int label) {
  const double p = std::clamp(score, kScoreClamp, 1.0 - kScoreClamp);
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

namespace nn_detail {

// Backward for one sample; fills per-array gradients indexed like
// param_arrays(). dL/dz for the sigmoid head is computed analytically from
// the clamped cross-entropy.
inline void backward_impl(const NetworkModel& m, const Example& ex, double score, int label,
                          Workspace& ws, std::vector<std::vector<double>>& grads) {
  // trunk head: dL/dz = p - y when unclamped, 0 when the clamp is active
  double dz;
  if (score < kScoreClamp || score > 1.0 - kScoreClamp) {
    dz = 0.0;
  } else {
    dz = score - static_cast<double>(label);
  }

  const std::size_t depth = m.trunk.size();
  std::size_t gi = grads.size();  // walk the arrays backwards: trunk last
  std::vector<double>& d_a = ws.d_a;
  std::vector<double>& d_b = ws.d_b;
  d_a.assign(1, dz);

  for (std::size_t li = depth; li-- > 0;) {
    const DenseLayer& l = m.trunk[li];
    std::vector<double>& gb = grads[--gi];
    std::vector<double>& gw = grads[--gi];
    const double* input;
    if (li == 0) {
      if (m.has_score_embed) {
        input = ws.trunk_in.data();
      } else if (m.has_conv) {
        input = ws.pool_drop.data();
      } else {
        input = ex.indicators.data();
      }
    } else {
      input = m.trunk_dropout[li - 1] ? ws.drop[li - 1].data() : ws.act[li - 1].data();
    }
    const bool need_dx = li > 0 || m.has_conv || m.has_score_embed;
    d_b.resize(static_cast<std::size_t>(l.in));
    dense_backward(l, input, d_a.data(), need_dx ? d_b.data() : nullptr, gw.data(), gb.data());
    if (li == 0) {
      d_a.swap(d_b);
      break;
    }
    // through dropout then relu of the previous layer
    const DenseLayer& prev = m.trunk[li - 1];
    for (int i = 0; i < prev.out; ++i) {
      double g = d_b[static_cast<std::size_t>(i)];
      if (m.trunk_dropout[li - 1] && !ws.mask[li - 1].empty())
        g = ws.mask[li - 1][static_cast<std::size_t>(i)] ? g / (1.0 - m.dropout_rate) : 0.0;
      d_b[static_cast<std::size_t>(i)] =
          ws.pre[li - 1][static_cast<std::size_t>(i)] > 0.0 ? g : 0.0;
    }
    d_a.swap(d_b);
  }

  // d_a now holds the gradient w.r.t. the trunk input.
  const double* d_trunk_in = d_a.data();

  if (m.has_score_embed) {
    const std::size_t flat = static_cast<std::size_t>(m.flatten_width());
    std::vector<double>& gb = grads[--gi];
    std::vector<double>& gw = grads[--gi];
    // score branch: relu then dense
    std::vector<double>& d_score = ws.d_b;
    d_score.assign(static_cast<std::size_t>(m.score_embed.out), 0.0);
    for (int i = 0; i < m.score_embed.out; ++i) {
      const double g = d_trunk_in[flat + static_cast<std::size_t>(i)];
      d_score[static_cast<std::size_t>(i)] =
          ws.score_pre[static_cast<std::size_t>(i)] > 0.0 ? g : 0.0;
    }
    dense_backward(m.score_embed, ex.indicators.data(), d_score.data(), nullptr, gw.data(), gb.data());
  }

  if (m.has_conv) {
    const int h = m.image_h;
    const int w = m.image_w;
    const std::size_t flat = static_cast<std::size_t>(m.flatten_width());
    std::vector<double>& d_pool = ws.d_pool;
    d_pool.assign(flat, 0.0);
    for (std::size_t i = 0; i < flat; ++i) {
      double g = d_trunk_in[i];
      if (!ws.pool_mask.empty()) g = ws.pool_mask[i] ? g / (1.0 - m.dropout_rate) : 0.0;
      d_pool[i] = g;
    }
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    std::vector<double>& d_img2 = ws.d_img2;
    d_img2.resize(plane * static_cast<std::size_t>(m.conv2.cout));
    maxpool_backward(d_pool.data(), ws.pool_arg.data(), h, w, m.conv2.cout, d_img2.data());
    for (std::size_t i = 0; i < d_img2.size(); ++i)
      if (ws.conv2_pre[i] <= 0.0) d_img2[i] = 0.0;
    std::vector<double>& gb2 = grads[3];
    std::vector<double>& gw2 = grads[2];
    std::vector<double>& d_img1 = ws.d_img1;
    d_img1.resize(plane * static_cast<std::size_t>(m.conv1.cout));
    conv_backward(m.conv2, ws.conv1_act.data(), h, w, d_img2.data(), d_img1.data(), gw2.data(),
                  gb2.data());
    for (std::size_t i = 0; i < d_img1.size(); ++i)
      if (ws.conv1_pre[i] <= 0.0) d_img1[i] = 0.0;
    std::vector<double>& gb1 = grads[1];
    std::vector<double>& gw1 = grads[0];
    conv_backward(m.conv1, ex.image.data(), h, w, d_img1.data(), nullptr, gw1.data(), gb1.data());
  }
}

}  // namespace nn_detail

// Mean cross-entropy over the batch and gradients for every trainable array.
// Deterministic given the seed (which pins the dropout masks).
inline std::pair<double, Gradients> loss_and_grads(const NetworkModel& m,
                                                   const std::vector<const Example*>& batch,
                                                   std::uint64_t seed) {
  if (batch.empty()) throw InvalidInputError("loss_and_grads: empty batch");
  Gradients grads(m);
  Workspace ws;
  KahanSum loss;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Example& ex = *batch[s];
    if (ex.label != 0 && ex.label != 1) throw InvalidInputError("labels must be 0 or 1");
    const double score = nn_detail::forward_impl(m, ex, Mode::Train, seed, s, ws);
    loss.add(bce_loss(score, ex.label));
    nn_detail::backward_impl(m, ex, score, ex.label, ws, grads.g);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grads.scale(inv);
  return {loss.value() * inv, std::move(grads)};
}

// --- Adam + training loop ---------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long t = 0;

  explicit AdamState(const NetworkModel& model) {
    for (const auto* p : model.param_arrays()) {
      m.emplace_back(p->size(), 0.0);
      v.emplace_back(p->size(), 0.0);
    }
  }
};

inline void adam_step(NetworkModel& model, AdamState& st, const Gradients& grads,
                      const TrainConfig& cfg, double lr) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  auto params = model.param_arrays();
  for (std::size_t a = 0; a < params.size(); ++a) {
    auto& w = *params[a];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grads.g[a][i];
      st.m[a][i] = cfg.beta1 * st.m[a][i] + (1.0 - cfg.beta1) * g;
      st.v[a][i] = cfg.beta2 * st.v[a][i] + (1.0 - cfg.beta2) * g * g;
      const double mh = st.m[a][i] / bc1;
      const double vh = st.v[a][i] / bc2;
      w[i] -= lr * mh / (std::sqrt(vh) + cfg.epsilon);
    }
  }
}

namespace nn_detail {

inline constexpr int kGradChunks = 16;  // fixed, so results do not depend on thread count

struct BatchResult {
  double loss = 0.0;
  double acc = 0.0;
};

// Batch gradient with a fixed chunk partition: each chunk accumulates its own
// buffer sequentially, buffers are reduced in chunk order.
inline BatchResult chunked_batch_grads(const NetworkModel& m, const Dataset& data,
                                       const std::vector<std::size_t>& idx, std::size_t lo,
                                       std::size_t hi, std::uint64_t seed, int threads,
                                       Gradients& out) {
  const std::size_t bn = hi - lo;
  std::vector<Gradients> chunk_grads;
  chunk_grads.reserve(kGradChunks);
  for (int c = 0; c < kGradChunks; ++c) chunk_grads.emplace_back(m);
  std::vector<double> chunk_loss(kGradChunks, 0.0);
  std::vector<double> chunk_hits(kGradChunks, 0.0);

  auto run_chunk = [&](int c) {
    const std::size_t c_lo = lo + bn * static_cast<std::size_t>(c) / kGradChunks;
    const std::size_t c_hi = lo + bn * static_cast<std::size_t>(c + 1) / kGradChunks;
    Workspace ws;
    KahanSum loss;
    double hits = 0.0;
    for (std::size_t s = c_lo; s < c_hi; ++s) {
      const Example& ex = data[idx[s]];
      const double score = forward_impl(m, ex, Mode::Train, seed, s - lo, ws);
      loss.add(bce_loss(score, ex.label));
      hits += (score > 0.5 ? 1 : 0) == ex.label;
      backward_impl(m, ex, score, ex.label, ws, chunk_grads[static_cast<std::size_t>(c)].g);
    }
    chunk_loss[static_cast<std::size_t>(c)] = loss.value();
    chunk_hits[static_cast<std::size_t>(c)] = hits;
  };

  if (threads <= 1) {
    for (int c = 0; c < kGradChunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(threads, kGradChunks);
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < kGradChunks; c = next.fetch_add(1)) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  out.zero();
  for (int c = 0; c < kGradChunks; ++c) out.add(chunk_grads[static_cast<std::size_t>(c)]);
  out.scale(1.0 / static_cast<double>(bn));
  BatchResult r;
  KahanSum total;
  for (int c = 0; c < kGradChunks; ++c) total.add(chunk_loss[static_cast<std::size_t>(c)]);
  r.loss = total.value() / static_cast<double>(bn);
  double hits = 0.0;
  for (int c = 0; c < kGradChunks; ++c) hits += chunk_hits[static_cast<std::size_t>(c)];
  r.acc = hits / static_cast<double>(bn);
  return r;
}

inline BatchResult eval_split(const NetworkModel& m, const Dataset& data,
                              const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
                              int threads) {
  const std::size_t bn = hi - lo;
  std::vector<double> losses(kGradChunks, 0.0);
  std::vector<double> hits(kGradChunks, 0.0);
  auto run_chunk = [&](int c) {
    const std::size_t c_lo = lo + bn * static_cast<std::size_t>(c) / kGradChunks;
    const std::size_t c_hi = lo + bn * static_cast<std::size_t>(c + 1) / kGradChunks;
    Workspace ws;
    KahanSum loss;
    double h = 0.0;
    for (std::size_t s = c_lo; s < c_hi; ++s) {
      const Example& ex = data[idx[s]];
      const double score = forward_impl(m, ex, Mode::Infer, 0, 0, ws);
      loss.add(bce_loss(score, ex.label));
      h += (score > 0.5 ? 1 : 0) == ex.label;
    }
    losses[static_cast<std::size_t>(c)] = loss.value();
    hits[static_cast<std::size_t>(c)] = h;
  };
  if (threads <= 1) {
    for (int c = 0; c < kGradChunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(threads, kGradChunks);
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < kGradChunks; c = next.fetch_add(1)) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }
  BatchResult r;
  KahanSum total;
  for (int c = 0; c < kGradChunks; ++c) total.add(losses[static_cast<std::size_t>(c)]);
  r.loss = total.value() / static_cast<double>(bn);
  double h = 0.0;
  for (int c = 0; c < kGradChunks; ++c) h += hits[static_cast<std::size_t>(c)];
  r.acc = h / static_cast<double>(bn);
  return r;
}

}  // namespace nn_detail

// Adam training with early stopping on validation loss and halve-on-plateau
// learning-rate decay. Bitwise deterministic given cfg.seed, for any thread
// count.
inline TrainHistory train(NetworkModel& model, const Dataset& data, const TrainConfig& cfg,
                          int threads = 1) {
  const std::size_t total = data.size();
  if (static_cast<double>(total) < static_cast<double>(cfg.batch_size) / (1.0 - cfg.val_split))
    throw InvalidInputError("train: dataset too small for the configured batch/validation split");
  const auto val_n = static_cast<std::size_t>(cfg.val_split * static_cast<double>(total));
  const std::size_t train_n = total - val_n;

  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng shuffle_rng(split_seed(cfg.seed, "split"));
  shuffle_rng.shuffle(idx);  // validation set = last val_n after this shuffle

  TrainHistory hist;
  AdamState adam(model);
  Gradients grads(model);
  double lr = cfg.lr;
  double best_val = std::numeric_limits<double>::infinity();
  int es_wait = 0;
  int plateau_wait = 0;
  const double improve_eps = 1e-8;

  std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_n));
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng erng(split_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    erng.shuffle(train_idx);
    KahanSum ep_loss;
    double ep_hits = 0.0;
    const std::size_t batches =
        (train_n + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t hi = std::min(train_n, lo + static_cast<std::size_t>(cfg.batch_size));
      const std::uint64_t bseed =
          split_seed(cfg.seed, "batch", static_cast<std::uint64_t>(epoch), b);
      const nn_detail::BatchResult r =
          nn_detail::chunked_batch_grads(model, data, train_idx, lo, hi, bseed, threads, grads);
      adam_step(model, adam, grads, cfg, lr);
      ep_loss.add(r.loss * static_cast<double>(hi - lo));
      ep_hits += r.acc * static_cast<double>(hi - lo);
    }
    hist.train_loss.push_back(ep_loss.value() / static_cast<double>(train_n));
    hist.train_acc.push_back(ep_hits / static_cast<double>(train_n));
    hist.lr.push_back(lr);

    double vloss;
    double vacc;
    if (val_n > 0) {
      const nn_detail::BatchResult v = nn_detail::eval_split(model, data, idx, train_n, total, threads);
      vloss = v.loss;
      vacc = v.acc;
    } else {
      vloss = hist.train_loss.back();
      vacc = hist.train_acc.back();
    }
    hist.val_loss.push_back(vloss);
    hist.val_acc.push_back(vacc);
    hist.epochs_run = epoch + 1;

    const bool improved = vloss < best_val - improve_eps;
    if (improved) {
      best_val = vloss;
      es_wait = 0;
      plateau_wait = 0;
    } else {
      ++es_wait;
      ++plateau_wait;
      if (plateau_wait >= cfg.plateau_patience) {
        lr = std::max(lr * cfg.plateau_factor, cfg.min_lr);
        plateau_wait = 0;
      }
      if (es_wait >= cfg.early_stop_patience) break;
    }
  }
  return hist;
}

// FNV-1a over the bit patterns of all trainable parameters; identifies the
// exact weight state in calibration files.
inline std::uint64_t model_weight_hash(const NetworkModel& model) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix_byte = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001B3ULL;
  };
  for (const auto* arr : model.param_arrays()) {
    for (const double x : *arr) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(x));
      std::memcpy(&bits, &x, sizeof(bits));
      for (int s = 0; s < 64; s += 8) mix_byte(static_cast<unsigned char>((bits >> s) & 0xFF));
    }
  }
  return h;
}

// Threshold-0.5 confusion metrics plus rank-based AUC with midrank ties.
inline Metrics evaluate(const NetworkModel& model, const Dataset& data, int threads = 1) {
  if (data.empty()) throw InvalidInputError("evaluate: empty dataset");
  const std::size_t n = data.size();
  std::vector<double> scores(n);
  const int workers = std::max(1, threads);
  if (workers <= 1) {
    Workspace ws;
    for (std::size_t i = 0; i < n; ++i)
      scores[i] = nn_detail::forward_impl(model, data[i], Mode::Infer, 0, 0, ws);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        Workspace ws;
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          scores[i] = nn_detail::forward_impl(model, data[i], Mode::Infer, 0, 0, ws);
      });
    for (auto& th : pool) th.join();
  }

  double tp = 0;
  double fp = 0;
  double tn = 0;
  double fn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pred = scores[i] > 0.5;
    if (data[i].label == 1) {
      pred ? ++tp : ++fn;
    } else {
      pred ? ++fp : ++tn;
    }
  }
  Metrics m;
  m.accuracy = (tp + tn) / static_cast<double>(n);
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;

  // AUC by midranks
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const double npos = tp + fn;
  const double nneg = fp + tn;
  if (npos == 0 || nneg == 0) {
    m.auc = 0.5;
    return m;
  }
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (data[order[k]].label == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  m.auc = (rank_sum_pos - npos * (npos + 1.0) / 2.0) / (npos * nneg);
  return m;
}

}  // namespace deeptest
