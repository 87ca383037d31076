#include "mgcr/checkpoint.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mgcr/error.hpp"

namespace mgcr::ckpt {
namespace {

void put_double(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_double(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  std::string line() {
    const auto nl = b_.find('\n', pos_);
    if (nl == std::string::npos) throw CorruptCheckpoint("checkpoint truncated at byte " + std::to_string(pos_));
    std::string s = b_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return s;
  }

  // "<key> <unsigned>"
  std::size_t keyed(const std::string& key) {
    const std::size_t at = pos_;
    const std::string s = line();
    std::size_t v = 0;
    if (s.rfind(key + " ", 0) != 0 || !parse_uint(s.substr(key.size() + 1), v))
      throw CorruptCheckpoint("expected '" + key + " <n>' at byte " + std::to_string(at));
    return v;
  }

  const char* take(std::size_t n) {
    if (b_.size() - pos_ < n) throw CorruptCheckpoint("checkpoint truncated at byte " + std::to_string(b_.size()));
    const char* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

  static bool parse_uint(const std::string& s, std::size_t& v) {
    if (s.empty() || s.size() > 18) return false;
    v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return false;
      v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return true;
  }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const nn::ParamStore& params, const RunConfig& config, std::size_t epoch) {
  const std::string text = config.canonical_text();
  std::string out = kMagic;
  out += "config " + std::to_string(text.size()) + "\n" + text;
  out += "hash " + hex64(fnv1a64(text)) + "\n";
  out += "epoch " + std::to_string(epoch) + "\n";
  out += "params " + std::to_string(params.params().size()) + "\n";
  for (const auto& p : params.params()) {
    out += p.name + " " + std::to_string(p.value.rank());
    for (std::size_t d : p.value.shape()) out += " " + std::to_string(d);
    out += "\n";
    for (double v : p.value.data()) put_double(out, v);
  }
  return out;
}

Checkpoint deserialize(const std::string& bytes) {
  const std::size_t magic_len = std::strlen(kMagic);
  if (bytes.compare(0, magic_len, kMagic) != 0)
    throw IncompatibleCheckpoint("not an MGCR checkpoint (bad magic)");
  Reader r(bytes);
  r.take(magic_len);
  Checkpoint c;
  const std::size_t text_len = r.keyed("config");
  c.config_text.assign(r.take(text_len), text_len);
  const std::string hash_line = r.line();
  if (hash_line != "hash " + hex64(fnv1a64(c.config_text)))
    throw IncompatibleCheckpoint("checkpoint config hash does not match its config text");
  try {
    c.config = RunConfig::parse(c.config_text);
  } catch (const std::exception& e) {
    throw IncompatibleCheckpoint(std::string("checkpoint config does not parse: ") + e.what());
  }
  c.epoch = r.keyed("epoch");
  const std::size_t count = r.keyed("params");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    std::istringstream desc(r.line());
    StoredParam p;
    std::size_t rank = 0;
    if (!(desc >> p.name >> rank) || rank > 8)
      throw CorruptCheckpoint("malformed parameter descriptor at byte " + std::to_string(at));
    p.shape.resize(rank);
    for (auto& d : p.shape)
      if (!(desc >> d)) throw CorruptCheckpoint("malformed parameter shape at byte " + std::to_string(at));
    const std::size_t n = ag::numel_of(p.shape);
    if (n > (bytes.size() - r.pos()) / 8)
      throw CorruptCheckpoint("checkpoint truncated inside parameter '" + p.name + "'");
    const char* raw = r.take(8 * n);
    p.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) p.values[k] = get_double(raw + 8 * k);
    c.params.push_back(std::move(p));
  }
  if (!r.done())
    throw CorruptCheckpoint("checkpoint has " + std::to_string(bytes.size() - r.pos()) + " trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const nn::ParamStore& params,
                     const RunConfig& config, std::size_t epoch) {
  const std::string bytes = serialize(params, config, epoch);
  // Write beside the target and rename so a crash never leaves half a file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

void restore(const Checkpoint& ckpt, nn::ParamStore& params, const RunConfig& expected) {
  if (ckpt.config.model_text() != expected.model_text())
    throw IncompatibleCheckpoint("checkpoint architecture differs from the requested configuration");
  auto& list = params.params();
  if (list.size() != ckpt.params.size())
    throw IncompatibleCheckpoint("checkpoint holds " + std::to_string(ckpt.params.size()) +
                                 " parameters, model has " + std::to_string(list.size()));
  for (std::size_t i = 0; i < list.size(); ++i) {
    const StoredParam& s = ckpt.params[i];
    if (s.name != list[i].name || s.shape != list[i].value.shape())
      throw IncompatibleCheckpoint("parameter " + std::to_string(i) + " mismatch: stored " + s.name +
                                   ag::shape_str(s.shape) + ", model " + list[i].name +
                                   ag::shape_str(list[i].value.shape()));
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto dst = list[i].value.mutable_data();
    std::copy(ckpt.params[i].values.begin(), ckpt.params[i].values.end(), dst.begin());
  }
}

}  // namespace mgcr::ckpt
