#include "mgcr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mgcr/error.hpp"

namespace mgcr {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

template <std::size_t N, typename T, typename Conv>
std::array<T, N> to_list(const std::string& key, const std::string& v, char sep, Conv conv) {
  std::array<T, N> out{};
  std::size_t i = 0, start = 0;
  while (true) {
    const auto pos = v.find(sep, start);
    const std::string item = trim(v.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (i >= N) throw ConfigError("config key '" + key + "' expects " + std::to_string(N) + " values");
    out[i++] = static_cast<T>(conv(key, item));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (i != N) throw ConfigError("config key '" + key + "' expects " + std::to_string(N) + " values");
  return out;
}

struct Entry {
  bool model;  // part of the architecture fingerprint
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MGCR_UINT(KEY, FIELD, MODEL)                                                     \
  {KEY, Entry{MODEL, [](RunConfig& c, const std::string& v) { c.FIELD = to_uint(KEY, v); }, \
              [](const RunConfig& c) { return std::to_string(c.FIELD); }}}
#define MGCR_DOUBLE(KEY, FIELD, MODEL)                                                     \
  {KEY, Entry{MODEL, [](RunConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); }, \
              [](const RunConfig& c) { return fmt_double(c.FIELD); }}}

const std::map<std::string, Entry>& table() {
  static const std::map<std::string, Entry> t = {
      MGCR_UINT("image_size", model.image_size, true),
      {"channels", Entry{true,
                         [](RunConfig& c, const std::string& v) {
                           c.model.channels = to_list<4, std::size_t>("channels", v, ',', to_uint);
                         },
                         [](const RunConfig& c) {
                           const auto& ch = c.model.channels;
                           return std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," +
                                  std::to_string(ch[2]) + "," + std::to_string(ch[3]);
                         }}},
      MGCR_UINT("d", model.d, true),
      MGCR_UINT("heads", model.heads, true),
      MGCR_UINT("text_len", model.text_len, true),
      MGCR_UINT("vocab_size", model.vocab_size, true),
      MGCR_UINT("text_layers", model.text_layers, true),
      MGCR_UINT("lvit_layers", model.lvit_layers, true),
      MGCR_UINT("ffn_mult", model.ffn_mult, true),
      MGCR_UINT("conv_kernel", model.conv_kernel, true),
      {"use_sgcm", Entry{true,
                         [](RunConfig& c, const std::string& v) { c.model.use_sgcm = to_bool("use_sgcm", v); },
                         [](const RunConfig& c) { return std::string(c.model.use_sgcm ? "1" : "0"); }}},
      MGCR_UINT("seed", model.seed, false),
      {"data_dir", Entry{false, [](RunConfig& c, const std::string& v) { c.data.data_dir = v; },
                         [](const RunConfig& c) { return c.data.data_dir; }}},
      MGCR_UINT("pairs", data.pairs, false),
      MGCR_UINT("canvas", data.canvas, false),
      MGCR_UINT("tile", data.tile, false),
      MGCR_UINT("n_min", data.n_min, false),
      MGCR_UINT("n_max", data.n_max, false),
      MGCR_DOUBLE("change_prob", data.change_prob, false),
      MGCR_DOUBLE("texture_amp", data.texture_amp, false),
      MGCR_DOUBLE("noise_amp", data.noise_amp, false),
      {"split", Entry{false,
                      [](RunConfig& c, const std::string& v) {
                        c.data.split = to_list<3, double>("split", v, ':', to_double);
                      },
                      [](const RunConfig& c) {
                        return fmt_double(c.data.split[0]) + ":" + fmt_double(c.data.split[1]) + ":" +
                               fmt_double(c.data.split[2]);
                      }}},
      MGCR_UINT("data_seed", data.data_seed, false),
      MGCR_DOUBLE("lr", train.lr, false),
      MGCR_DOUBLE("lr_min", train.lr_min, false),
      MGCR_DOUBLE("weight_decay", train.weight_decay, false),
      MGCR_DOUBLE("beta1", train.beta1, false),
      MGCR_DOUBLE("beta2", train.beta2, false),
      MGCR_DOUBLE("adam_eps", train.adam_eps, false),
      MGCR_UINT("epochs", train.epochs, false),
      MGCR_UINT("batch_size", train.batch_size, false),
      MGCR_DOUBLE("lambda1", train.lambda1, false),
      MGCR_DOUBLE("lambda2", train.lambda2, false),
      MGCR_DOUBLE("lambda3", train.lambda3, false),
      MGCR_DOUBLE("threshold", train.threshold, false),
      MGCR_UINT("min_freq", train.min_freq, false),
  };
  return t;
}

#undef MGCR_UINT
#undef MGCR_DOUBLE

const Entry& entry(const std::string& key) {
  const auto& t = table();
  const auto it = t.find(key);
  if (it == t.end()) {
    std::string valid;
    for (const auto& [k, _] : t) valid += (valid.empty() ? "" : ", ") + k;
    throw UsageError("unknown config key '" + key + "'; valid keys: " + valid);
  }
  return it->second;
}

}  // namespace

void ModelConfig::validate() const {
  if (image_size == 0 || image_size % 32 != 0)
    throw ConfigError("image_size must be a positive multiple of 32, got " + std::to_string(image_size));
  for (std::size_t c : channels)
    if (c == 0) throw ConfigError("channels must be positive");
  if (d == 0 || heads == 0 || d % heads != 0)
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(d) + ")");
  if (text_len < 2) throw ConfigError("text_len must be at least 2");
  if (vocab_size < 4) throw ConfigError("vocab_size must include the 4 special tokens");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
}

void DataConfig::validate() const {
  if (canvas == 0 || canvas % 32 != 0)
    throw ConfigError("canvas must be a positive multiple of 32, got " + std::to_string(canvas));
  if (tile == 0 || canvas % tile != 0)
    throw ConfigError("tile size " + std::to_string(tile) + " does not divide canvas " + std::to_string(canvas));
  if (tile % 32 != 0) throw ConfigError("tile must be a multiple of 32");
  if (n_min > n_max) throw ConfigError("n_min must not exceed n_max");
  if (change_prob < 0.0 || change_prob > 1.0) throw ConfigError("change_prob must lie in [0, 1]");
  if (texture_amp < 0.0 || noise_amp < 0.0) throw ConfigError("texture_amp/noise_amp must be >= 0");
  double total = 0.0;
  for (double r : split) {
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (total <= 0.0) throw ConfigError("split ratios must not all be zero");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (lr_min < 0.0 || lr_min > lr) throw ConfigError("lr_min must lie in [0, lr]");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (epochs == 0 || epochs > 300) throw ConfigError("epochs must lie in [1, 300]");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) throw ConfigError("loss weights must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  entry(key).set(*this, trim(value));
}

std::string RunConfig::get(const std::string& key) const { return entry(key).get(*this); }

void RunConfig::validate() const {
  model.validate();
  data.validate();
  train.validate();
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, e] : table()) out += k + " = " + e.get(*this) + "\n";
  return out;
}

std::string RunConfig::model_text() const {
  std::string out;
  for (const auto& [k, e] : table())
    if (e.model) out += k + " = " + e.get(*this) + "\n";
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : table()) out.push_back(k);
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mgcr
