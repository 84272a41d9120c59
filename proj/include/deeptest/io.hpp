#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deeptest/bench.hpp"
#include "deeptest/calibrate.hpp"
#include "deeptest/dgp.hpp"
#include "deeptest/errors.hpp"
#include "deeptest/features.hpp"
#include "deeptest/nn.hpp"

namespace deeptest {

inline constexpr const char* kToolVersion = "0.1.0";

using json = nlohmann::json;

namespace io_detail {

inline const char* kB64Chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(kB64Chars[(v >> 6) & 63]);
    out.push_back(kB64Chars[v & 63]);
    i += 3;
  }
  const std::size_t rem = bytes.size() - i;
  if (rem == 1) {
    const unsigned v = bytes[i] << 16;
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Chars[(v >> 18) & 63]);
    out.push_back(kB64Chars[(v >> 12) & 63]);
    out.push_back(kB64Chars[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  unsigned buf = 0;
  int bits = 0;
  for (const char c : s) {
    if (c == '=') break;
    const int v = val(c);
    if (v < 0) throw DataError("invalid base64 payload");
    buf = (buf << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

// little-endian 64-bit float packing, independent of host order
inline std::string doubles_to_base64(const std::vector<double>& xs) {
  std::vector<unsigned char> bytes;
  bytes.reserve(xs.size() * 8);
  for (const double x : xs) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int s = 0; s < 64; s += 8) bytes.push_back(static_cast<unsigned char>((bits >> s) & 0xFF));
  }
  return base64_encode(bytes);
}

inline std::vector<double> base64_to_doubles(const std::string& s) {
  const std::vector<unsigned char> bytes = base64_decode(s);
  if (bytes.size() % 8 != 0) throw DataError("weight blob has truncated length");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int s = 7; s >= 0; --s) bits = (bits << 8) | bytes[i * 8 + static_cast<std::size_t>(s)];
    std::memcpy(&out[i], &bits, 8);
  }
  return out;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::uint64_t parse_hex64(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

}  // namespace io_detail

// Field access that names the offending file and field on failure.
inline const json& require_field(const json& j, const std::string& field, const std::string& file) {
  if (!j.contains(field)) throw DataError(file + ": missing field '" + field + "'");
  return j.at(field);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << j.dump(1) << "\n";
}

inline std::uint64_t indicator_ordering_hash() {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char* name : indicator_names()) {
    for (const char* c = name; *c; ++c) {
      h ^= static_cast<unsigned char>(*c);
      h *= 0x100000001B3ULL;
    }
    h ^= static_cast<unsigned char>('|');
    h *= 0x100000001B3ULL;
  }
  return h;
}

// --- model files ------------------------------------------------------------

inline json train_config_to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"val_split", c.val_split},
              {"early_stop_patience", c.early_stop_patience},
              {"plateau_factor", c.plateau_factor},
              {"plateau_patience", c.plateau_patience},
              {"min_lr", c.min_lr},
              {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const json& j, const std::string& file) {
  TrainConfig c;
  c.lr = require_field(j, "lr", file).get<double>();
  c.beta1 = require_field(j, "beta1", file).get<double>();
  c.beta2 = require_field(j, "beta2", file).get<double>();
  c.epsilon = require_field(j, "epsilon", file).get<double>();
  c.batch_size = require_field(j, "batch_size", file).get<int>();
  c.max_epochs = require_field(j, "max_epochs", file).get<int>();
  c.val_split = require_field(j, "val_split", file).get<double>();
  c.early_stop_patience = require_field(j, "early_stop_patience", file).get<int>();
  c.plateau_factor = require_field(j, "plateau_factor", file).get<double>();
  c.plateau_patience = require_field(j, "plateau_patience", file).get<int>();
  c.min_lr = require_field(j, "min_lr", file).get<double>();
  c.seed = require_field(j, "seed", file).get<std::uint64_t>();
  return c;
}

inline json layer_specs_json(const NetworkModel& m) {
  json layers = json::array();
  if (m.has_conv) {
    layers.push_back({{"kind", "conv2d_same_3x3"}, {"cin", m.conv1.cin}, {"filters", m.conv1.cout}});
    layers.push_back({{"kind", "relu"}});
    layers.push_back({{"kind", "conv2d_same_3x3"}, {"cin", m.conv2.cin}, {"filters", m.conv2.cout}});
    layers.push_back({{"kind", "relu"}});
    layers.push_back({{"kind", "maxpool_3x3_stride3"}});
    layers.push_back({{"kind", "dropout"}, {"rate", m.dropout_rate}});
    layers.push_back({{"kind", "flatten_colmajor"}, {"width", m.flatten_width()}});
  }
  if (m.has_score_embed) {
    layers.push_back(
        {{"kind", "dense"}, {"in", m.score_embed.in}, {"width", m.score_embed.out}, {"branch", "score"}});
    layers.push_back({{"kind", "relu"}, {"branch", "score"}});
    layers.push_back({{"kind", "concat"}});
  }
  for (std::size_t i = 0; i < m.trunk.size(); ++i) {
    layers.push_back({{"kind", "dense"}, {"in", m.trunk[i].in}, {"width", m.trunk[i].out}});
    if (i + 1 < m.trunk.size()) {
      layers.push_back({{"kind", "relu"}});
      if (m.trunk_dropout[i]) layers.push_back({{"kind", "dropout"}, {"rate", m.dropout_rate}});
    } else {
      layers.push_back({{"kind", "sigmoid"}});
    }
  }
  return layers;
}

inline void save_model(const std::string& path, const NetworkModel& m, const TrainConfig& cfg) {
  json j;
  j["format"] = "deeptest-model-v1";
  j["tool_version"] = kToolVersion;
  j["architecture"] = architecture_name(m.tag);
  j["image_h"] = m.image_h;
  j["image_w"] = m.image_w;
  j["dropout_rate"] = m.dropout_rate;
  j["has_conv"] = m.has_conv;
  j["has_score_embed"] = m.has_score_embed;
  j["layers"] = layer_specs_json(m);
  j["indicator_ordering_hash"] = io_detail::hex64(indicator_ordering_hash());
  j["train_config"] = train_config_to_json(cfg);
  j["weight_hash"] = io_detail::hex64(model_weight_hash(m));
  json weights;
  if (m.has_conv) {
    weights["conv1.w"] = io_detail::doubles_to_base64(m.conv1.w);
    weights["conv1.b"] = io_detail::doubles_to_base64(m.conv1.b);
    weights["conv1.cin"] = m.conv1.cin;
    weights["conv1.cout"] = m.conv1.cout;
    weights["conv2.w"] = io_detail::doubles_to_base64(m.conv2.w);
    weights["conv2.b"] = io_detail::doubles_to_base64(m.conv2.b);
    weights["conv2.cin"] = m.conv2.cin;
    weights["conv2.cout"] = m.conv2.cout;
  }
  if (m.has_score_embed) {
    weights["score.w"] = io_detail::doubles_to_base64(m.score_embed.w);
    weights["score.b"] = io_detail::doubles_to_base64(m.score_embed.b);
    weights["score.in"] = m.score_embed.in;
    weights["score.out"] = m.score_embed.out;
  }
  weights["trunk.count"] = m.trunk.size();
  for (std::size_t i = 0; i < m.trunk.size(); ++i) {
    const std::string base = "trunk." + std::to_string(i);
    weights[base + ".w"] = io_detail::doubles_to_base64(m.trunk[i].w);
    weights[base + ".b"] = io_detail::doubles_to_base64(m.trunk[i].b);
    weights[base + ".in"] = m.trunk[i].in;
    weights[base + ".out"] = m.trunk[i].out;
    weights[base + ".dropout_after"] = static_cast<bool>(m.trunk_dropout[i]);
  }
  j["weights"] = weights;
  write_json_file(path, j);
}

inline NetworkModel load_model(const std::string& path, TrainConfig* cfg_out = nullptr) {
  const json j = read_json_file(path);
  if (require_field(j, "format", path).get<std::string>() != "deeptest-model-v1")
    throw DataError(path + ": field 'format' has unexpected value");
  NetworkModel m;
  m.tag = architecture_from_name(require_field(j, "architecture", path).get<std::string>());
  m.image_h = require_field(j, "image_h", path).get<int>();
  m.image_w = require_field(j, "image_w", path).get<int>();
  m.dropout_rate = require_field(j, "dropout_rate", path).get<double>();
  m.has_conv = require_field(j, "has_conv", path).get<bool>();
  m.has_score_embed = require_field(j, "has_score_embed", path).get<bool>();
  const std::string ordering =
      require_field(j, "indicator_ordering_hash", path).get<std::string>();
  if (io_detail::parse_hex64(ordering) != indicator_ordering_hash())
    throw DataError(path + ": field 'indicator_ordering_hash' does not match this library");
  const json& w = require_field(j, "weights", path);
  auto blob = [&](const std::string& key, std::size_t expect) {
    std::vector<double> xs =
        io_detail::base64_to_doubles(require_field(w, key, path).get<std::string>());
    if (xs.size() != expect)
      throw DataError(path + ": field 'weights." + key + "' has wrong length");
    return xs;
  };
  if (m.has_conv) {
    m.conv1.cin = require_field(w, "conv1.cin", path).get<int>();
    m.conv1.cout = require_field(w, "conv1.cout", path).get<int>();
    m.conv1.w = blob("conv1.w", 9u * static_cast<std::size_t>(m.conv1.cin) * static_cast<std::size_t>(m.conv1.cout));
    m.conv1.b = blob("conv1.b", static_cast<std::size_t>(m.conv1.cout));
    m.conv2.cin = require_field(w, "conv2.cin", path).get<int>();
    m.conv2.cout = require_field(w, "conv2.cout", path).get<int>();
    m.conv2.w = blob("conv2.w", 9u * static_cast<std::size_t>(m.conv2.cin) * static_cast<std::size_t>(m.conv2.cout));
    m.conv2.b = blob("conv2.b", static_cast<std::size_t>(m.conv2.cout));
  }
  if (m.has_score_embed) {
    m.score_embed.in = require_field(w, "score.in", path).get<int>();
    m.score_embed.out = require_field(w, "score.out", path).get<int>();
    m.score_embed.w = blob("score.w", static_cast<std::size_t>(m.score_embed.in) *
                                           static_cast<std::size_t>(m.score_embed.out));
    m.score_embed.b = blob("score.b", static_cast<std::size_t>(m.score_embed.out));
  }
  const auto count = require_field(w, "trunk.count", path).get<std::size_t>();
  for (std::size_t i = 0; i < count; ++i) {
    const std::string base = "trunk." + std::to_string(i);
    DenseLayer l;
    l.in = require_field(w, base + ".in", path).get<int>();
    l.out = require_field(w, base + ".out", path).get<int>();
    l.w = blob(base + ".w", static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out));
    l.b = blob(base + ".b", static_cast<std::size_t>(l.out));
    m.trunk.push_back(std::move(l));
    m.trunk_dropout.push_back(require_field(w, base + ".dropout_after", path).get<bool>());
  }
  const std::string wh = require_field(j, "weight_hash", path).get<std::string>();
  if (io_detail::parse_hex64(wh) != model_weight_hash(m))
    throw DataError(path + ": field 'weight_hash' does not match the stored weights");
  if (cfg_out) *cfg_out = train_config_from_json(require_field(j, "train_config", path), path);
  return m;
}

// --- calibration files --------------------------------------------------

inline void save_calibration(const std::string& path, const CalibrationTable& table,
                             std::uint64_t seed) {
  json j;
  j["format"] = "deeptest-calibration-v1";
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  json arr = json::array();
  for (const auto& [key, e] : table.entries) {
    json row;
    row["stat"] = std::get<0>(key);
    row["n"] = std::get<1>(key);
    row["alpha"] = std::get<2>(key);
    row["d_alpha"] = e.d_alpha;
    row["n_prime"] = e.n_prime;
    row["seed"] = e.seed;
    if (e.model_hash != 0) row["model_hash"] = io_detail::hex64(e.model_hash);
    arr.push_back(row);
  }
  j["entries"] = arr;
  write_json_file(path, j);
}

inline CalibrationTable load_calibration(const std::string& path) {
  const json j = read_json_file(path);
  if (require_field(j, "format", path).get<std::string>() != "deeptest-calibration-v1")
    throw DataError(path + ": field 'format' has unexpected value");
  CalibrationTable table;
  for (const json& row : require_field(j, "entries", path)) {
    const std::string stat = require_field(row, "stat", path).get<std::string>();
    const int n = require_field(row, "n", path).get<int>();
    const double alpha = require_field(row, "alpha", path).get<double>();
    CalibrationEntry e;
    e.d_alpha = require_field(row, "d_alpha", path).get<double>();
    e.n_prime = require_field(row, "n_prime", path).get<int>();
    e.seed = require_field(row, "seed", path).get<std::uint64_t>();
    if (row.contains("model_hash"))
      e.model_hash = io_detail::parse_hex64(row.at("model_hash").get<std::string>());
    table.entries[{stat, n, alpha}] = e;
  }
  return table;
}

// --- feature files --------------------------------------------------------

inline void save_features(const std::string& path, const std::vector<FeatureRecord>& records) {
  json j;
  j["format"] = "deeptest-features-v1";
  j["tool_version"] = kToolVersion;
  json arr = json::array();
  for (const auto& r : records) {
    json row;
    row["n"] = r.n;
    row["label"] = r.label;
    row["image"] = r.image;
    row["indicators"] = r.indicators;
    arr.push_back(std::move(row));
  }
  j["records"] = std::move(arr);
  write_json_file(path, j);
}

inline std::vector<FeatureRecord> load_features(const std::string& path) {
  const json j = read_json_file(path);
  if (require_field(j, "format", path).get<std::string>() != "deeptest-features-v1")
    throw DataError(path + ": field 'format' has unexpected value");
  std::vector<FeatureRecord> out;
  for (const json& row : require_field(j, "records", path)) {
    FeatureRecord r;
    r.n = require_field(row, "n", path).get<int>();
    r.label = require_field(row, "label", path).get<int>();
    const auto& img = require_field(row, "image", path);
    if (img.size() != r.image.size()) throw DataError(path + ": field 'image' has wrong length");
    for (std::size_t i = 0; i < r.image.size(); ++i) r.image[i] = img[i].get<double>();
    const auto& ind = require_field(row, "indicators", path);
    if (ind.size() != r.indicators.size())
      throw DataError(path + ": field 'indicators' has wrong length");
    for (std::size_t i = 0; i < r.indicators.size(); ++i) r.indicators[i] = ind[i].get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

// --- corpus manifests -------------------------------------------------------

inline void save_corpus_manifest(const std::string& path, const std::vector<CorpusEntry>& entries,
                                 std::uint64_t seed) {
  json j;
  j["format"] = "deeptest-corpus-v1";
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  json arr = json::array();
  for (const auto& e : entries) {
    json row;
    row["model"] = model_name(e.model);
    row["n"] = e.n;
    row["role"] = e.role == Role::Train ? "train" : "test";
    if (e.noise_class) row["noise_class"] = static_cast<int>(*e.noise_class);
    if (e.variant) row["variant"] = *e.variant == Variant::A ? "A" : "B";
    row["seed"] = e.seed;
    row["label"] = e.label;
    arr.push_back(std::move(row));
  }
  j["entries"] = std::move(arr);
  write_json_file(path, j);
}

inline std::vector<CorpusEntry> load_corpus_manifest(const std::string& path) {
  const json j = read_json_file(path);
  if (require_field(j, "format", path).get<std::string>() != "deeptest-corpus-v1")
    throw DataError(path + ": field 'format' has unexpected value");
  std::vector<CorpusEntry> out;
  for (const json& row : require_field(j, "entries", path)) {
    CorpusEntry e;
    e.model = model_from_name(require_field(row, "model", path).get<std::string>());
    e.n = require_field(row, "n", path).get<int>();
    e.role = require_field(row, "role", path).get<std::string>() == "test" ? Role::Test : Role::Train;
    if (row.contains("noise_class"))
      e.noise_class = static_cast<NoiseClass>(row.at("noise_class").get<int>());
    if (row.contains("variant"))
      e.variant = row.at("variant").get<std::string>() == "B" ? Variant::B : Variant::A;
    e.seed = require_field(row, "seed", path).get<std::uint64_t>();
    e.label = require_field(row, "label", path).get<int>();
    out.push_back(e);
  }
  return out;
}

// --- power tables -----------------------------------------------------------

inline void save_power_csv(const std::string& path, const PowerTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "model,n,method,power\n";
  char buf[64];
  for (const auto& row : t.rows)
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
      std::snprintf(buf, sizeof(buf), "%.6f", row.power[m]);
      out << row.model << "," << row.n << "," << t.methods[m] << "," << buf << "\n";
    }
}

// Wide layout, one column per method: ready for plotting power against n.
inline void save_power_plot_csv(const std::string& path, const PowerTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "model,n";
  for (const auto& m : t.methods) out << "," << m;
  out << "\n";
  char buf[64];
  for (const auto& row : t.rows) {
    out << row.model << "," << row.n;
    for (const double p : row.power) {
      std::snprintf(buf, sizeof(buf), "%.6f", p);
      out << "," << buf;
    }
    out << "\n";
  }
}

inline json power_summary_json(const PowerTable& t) {
  json j;
  j["alpha"] = t.alpha;
  j["reps"] = t.reps;
  j["methods"] = t.methods;
  json sums = json::array();
  for (const auto& s : t.summaries) {
    json row;
    row["n"] = s.n;
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
      row["avg_power"][t.methods[m]] = s.avg_power[m];
      row["avg_gap"][t.methods[m]] = s.avg_gap[m];
      row["max_gap"][t.methods[m]] = s.max_gap[m];
    }
    sums.push_back(std::move(row));
  }
  j["summaries"] = std::move(sums);
  return j;
}

// --- run manifests ------------------------------------------------------

inline void write_run_manifest(const std::string& path, const std::string& command,
                               const json& config, const std::vector<std::string>& inputs,
                               const std::vector<std::string>& outputs, double wall_seconds) {
  json j;
  j["format"] = "deeptest-manifest-v1";
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["wall_clock_seconds"] = wall_seconds;
  const auto now = std::chrono::system_clock::now();
  j["created_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  write_json_file(path, j);
}

}  // namespace deeptest
