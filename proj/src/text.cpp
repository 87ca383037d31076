#include "mgcr/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mgcr/error.hpp"

namespace mgcr::text {
namespace {

const char* const kSpecials[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

KeywordRules::KeywordRules(std::vector<std::string> patterns) : patterns_(std::move(patterns)) {
  if (patterns_.empty()) throw ConfigError("keyword rule list must not be empty");
  for (const auto& p : patterns_) {
    try {
      compiled_.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw ConfigError("keyword pattern '" + p + "' does not compile: " + e.what());
    }
  }
}

const KeywordRules& KeywordRules::defaults() {
  static const KeywordRules rules({R"(\bbuildings?\b)", R"(\bdistributed\b)", R"(\bdensity\b)",
                                   R"(\bclustered\b)", R"(\brows?\b)", R"(\bcorner\b)",
                                   R"(\bregion\b)", R"(\broads?\b)"});
  return rules;
}

bool KeywordRules::matches(const std::string& sentence) const {
  return std::any_of(compiled_.begin(), compiled_.end(),
                     [&](const std::regex& re) { return std::regex_search(sentence, re); });
}

Vocabulary::Vocabulary() {
  for (const char* s : kSpecials) add(s);
}

int Vocabulary::id(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::add(const std::string& token) {
  const auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_[token] = id;
  return id;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0, offset = 0;
  while (std::getline(in, line)) {
    if (lineno < 4) {
      if (line != kSpecials[lineno])
        throw ParseError("vocabulary line " + std::to_string(lineno + 1) + " must be " + kSpecials[lineno],
                         offset);
    } else {
      if (line.empty()) throw ParseError("empty token in vocabulary file", offset);
      if (v.ids_.count(line)) throw ParseError("duplicate token '" + line + "' in vocabulary file", offset);
      v.add(line);
    }
    offset += line.size() + 1;
    ++lineno;
  }
  if (lineno < 4) throw ParseError("vocabulary file is missing special tokens", offset);
  return v;
}

std::string synthesize_caption(const SceneTruth& truth) {
  const std::size_t n = truth.buildings.size();
  if (n == 0) return "There are no buildings in the image.";

  const double area_units =
      static_cast<double>(truth.width) * static_cast<double>(truth.height) / 4096.0;
  const double per_unit = static_cast<double>(n) / (area_units > 0 ? area_units : 1.0);
  const char* density = per_unit <= 4.0 ? "sparsely" : per_unit <= 8.0 ? "moderately" : "densely";

  static constexpr std::array<const char*, 4> kQuadrants{"top-left", "top-right", "bottom-left",
                                                          "bottom-right"};
  std::array<std::size_t, 4> counts{};
  const double half_w = static_cast<double>(truth.width) / 2.0;
  const double half_h = static_cast<double>(truth.height) / 2.0;
  for (const auto& b : truth.buildings) {
    const std::size_t q = (b.center_y() < half_h ? 0 : 2) + (b.center_x() < half_w ? 0 : 1);
    ++counts[q];
  }
  const std::size_t occupied =
      static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
  const std::size_t top = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  std::string distribution, place;
  if (occupied == 1) {
    distribution = "clustered";
    place = std::string(kQuadrants[top]) + " region";
  } else if (occupied == 4 && 2 * counts[top] <= n) {
    distribution = "evenly distributed";
    place = "whole extent";
  } else {
    distribution = "scattered";
    place = std::string(kQuadrants[top]) + " region";
  }

  std::ostringstream s;
  if (n == 1)
    s << "There is 1 building, ";
  else
    s << "There are " << n << " buildings, ";
  s << density << ' ' << distribution << " in the " << place << " of the image. "
    << "The background contains roads and trees.";
  return s.str();
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    cur += c;
    if (c == '.' || c == '?' || c == '!') {
      std::string t = trim(cur);
      if (!t.empty()) out.push_back(std::move(t));
      cur.clear();
    }
  }
  std::string t = trim(cur);
  if (!t.empty()) out.push_back(std::move(t));
  return out;
}

std::string prune_caption(const std::string& raw_text, const KeywordRules& rules) {
  std::string out;
  for (const auto& sentence : split_sentences(raw_text)) {
    if (!rules.matches(sentence)) continue;
    if (!out.empty()) out += ' ';
    out += sentence;
  }
  return out.empty() ? std::string(kNoContent) : out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (word_char(c)) {
      cur += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus, std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  for (const auto& doc : corpus)
    for (auto& w : split_words(doc)) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, c] : freq)
    if (c >= min_freq && c > 0) ranked.emplace_back(w, c);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [w, _] : ranked) v.add(w);
  return v;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, std::size_t length) {
  if (length < 2) throw ContractError("token sequence length must be at least 2");
  std::vector<int> ids{kBos};
  for (const auto& w : split_words(text)) {
    if (ids.size() + 1 >= length) break;
    ids.push_back(vocab.id(w));
  }
  ids.push_back(kEos);
  ids.resize(length, kPad);
  return ids;
}

std::string caption_to_json_line(const CaptionRecord& r) {
  nlohmann::ordered_json j;
  j["image_id"] = r.image_id;
  j["temporal_index"] = r.temporal_index;
  j["raw_text"] = r.raw_text;
  if (!r.pruned_text.empty()) j["pruned_text"] = r.pruned_text;
  if (r.generation.temperature) j["temperature"] = *r.generation.temperature;
  if (r.generation.top_p) j["top_p"] = *r.generation.top_p;
  if (r.generation.num_beams) j["num_beams"] = *r.generation.num_beams;
  if (r.generation.max_new_tokens) j["max_new_tokens"] = *r.generation.max_new_tokens;
  return j.dump();
}

CaptionRecord caption_from_json_line(const std::string& line, std::size_t line_offset) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed caption record: ") + e.what(), line_offset + e.byte);
  }
  if (!j.is_object()) throw ParseError("caption record must be a JSON object", line_offset);
  CaptionRecord r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.temporal_index = j.at("temporal_index").get<int>();
    r.raw_text = j.at("raw_text").get<std::string>();
    if (j.contains("pruned_text")) r.pruned_text = j["pruned_text"].get<std::string>();
    const nlohmann::json& meta = j.contains("generation") ? j["generation"] : j;
    if (meta.contains("temperature")) r.generation.temperature = meta["temperature"].get<double>();
    if (meta.contains("top_p")) r.generation.top_p = meta["top_p"].get<double>();
    if (meta.contains("num_beams")) r.generation.num_beams = meta["num_beams"].get<int>();
    if (meta.contains("max_new_tokens")) r.generation.max_new_tokens = meta["max_new_tokens"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("caption record field error: ") + e.what(), line_offset);
  }
  if (r.temporal_index != 1 && r.temporal_index != 2)
    throw ParseError("temporal_index must be 1 or 2", line_offset);
  return r;
}

std::vector<CaptionRecord> read_captions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read caption file " + path.string());
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) out.push_back(caption_from_json_line(line, offset));
    offset += line.size() + 1;
  }
  return out;
}

void write_captions(const std::filesystem::path& path, const std::vector<CaptionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write caption file " + path.string());
  for (const auto& r : records) out << caption_to_json_line(r) << '\n';
}

}  // namespace mgcr::text
