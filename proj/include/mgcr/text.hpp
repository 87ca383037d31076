#pragma once

// Caption text channel: template captions from scene truth, keyword pruning,
// vocabulary and fixed-length tokenization, and the JSON-lines corpus format.

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "mgcr/scene.hpp"

namespace mgcr::text {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr const char* kNoContent = "no relevant content";

// Decoding settings of an external captioner, kept as provenance only.
struct GenerationMeta {
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> num_beams;
  std::optional<int> max_new_tokens;
  bool empty() const { return !temperature && !top_p && !num_beams && !max_new_tokens; }
};

struct CaptionRecord {
  std::string image_id;
  int temporal_index = 1;  // 1 or 2
  std::string raw_text;
  std::string pruned_text;
  std::vector<int> token_ids;
  GenerationMeta generation;
};

class KeywordRules {
 public:
  // Throws ConfigError if a pattern fails to compile or the list is empty.
  explicit KeywordRules(std::vector<std::string> patterns);
  static const KeywordRules& defaults();

  bool matches(const std::string& sentence) const;
  const std::vector<std::string>& patterns() const { return patterns_; }

 private:
  std::vector<std::string> patterns_;
  std::vector<std::regex> compiled_;
};

class Vocabulary {
 public:
  Vocabulary();  // specials only

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // Appends a new token and returns its id; existing tokens keep theirs.
  int add(const std::string& token);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

std::string synthesize_caption(const SceneTruth& truth);

// Sentences split on . ? ! with the terminator kept, whitespace trimmed.
std::vector<std::string> split_sentences(const std::string& text);

std::string prune_caption(const std::string& raw_text,
                          const KeywordRules& rules = KeywordRules::defaults());

// Lowercased runs of letters/digits (non-ASCII bytes count as letters).
std::vector<std::string> split_words(const std::string& text);

Vocabulary build_vocabulary(const std::vector<std::string>& corpus, std::size_t min_freq);

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, std::size_t length);

// JSON-lines caption corpus.
std::vector<CaptionRecord> read_captions(const std::filesystem::path& path);
void write_captions(const std::filesystem::path& path, const std::vector<CaptionRecord>& records);
std::string caption_to_json_line(const CaptionRecord& record);
CaptionRecord caption_from_json_line(const std::string& line, std::size_t line_offset = 0);

}  // namespace mgcr::text
