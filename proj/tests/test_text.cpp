#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mgcr/error.hpp"
#include "mgcr/text.hpp"

using namespace mgcr;
namespace fs = std::filesystem;

namespace {

fs::path data_dir() { return fs::path(MGCR_TEST_DATA); }

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mgcr_text_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Text, PruningMatchesGoldens) {
  const auto records = text::read_captions(data_dir() / "captions_raw.jsonl");
  const auto golden = read_lines(data_dir() / "captions_pruned_golden.txt");
  ASSERT_EQ(records.size(), 20u);
  ASSERT_EQ(golden.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    EXPECT_EQ(text::prune_caption(records[i].raw_text), golden[i]) << records[i].image_id;
}

TEST(Text, PruningIsIdempotent) {
  for (const auto& r : text::read_captions(data_dir() / "captions_raw.jsonl")) {
    const auto once = text::prune_caption(r.raw_text);
    EXPECT_EQ(text::prune_caption(once), once) << r.image_id;
  }
}

TEST(Text, KeywordsMatchWholeWordsOnly) {
  const auto& rules = text::KeywordRules::defaults();
  EXPECT_TRUE(rules.matches("A road crosses."));
  EXPECT_TRUE(rules.matches("Several Buildings stand here."));
  EXPECT_FALSE(rules.matches("The roadway is wide."));
  EXPECT_FALSE(rules.matches("Clouds cover the sky."));
  EXPECT_THROW(text::KeywordRules({}), ConfigError);
  EXPECT_THROW(text::KeywordRules({"("}), ConfigError);
}

TEST(Text, SentenceSplitKeepsTerminators) {
  const auto s = text::split_sentences("  One road.  Is it?Yes!  tail ");
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0], "One road.");
  EXPECT_EQ(s[1], "Is it?");
  EXPECT_EQ(s[2], "Yes!");
  EXPECT_EQ(s[3], "tail");
}

TEST(Text, VocabularyOrderIsFrequencyThenAlphabetical) {
  const auto v = text::build_vocabulary({"b a c", "a b", "a d"}, 1);
  ASSERT_EQ(v.size(), 8u);
  EXPECT_EQ(v.token(text::kPad), "<pad>");
  EXPECT_EQ(v.token(4), "a");
  EXPECT_EQ(v.token(5), "b");
  EXPECT_EQ(v.token(6), "c");
  EXPECT_EQ(v.token(7), "d");
  EXPECT_EQ(v.id("zzz"), text::kUnk);
  const auto pruned = text::build_vocabulary({"b a c", "a b", "a d"}, 2);
  EXPECT_EQ(pruned.size(), 6u);
}

TEST(Text, VocabularyFileRoundTrip) {
  const auto v = text::build_vocabulary({"road house road"}, 1);
  const auto p = temp_file("vocab.txt");
  v.save(p);
  EXPECT_EQ(text::Vocabulary::load(p), v);
  std::ofstream(p) << "<pad>\nbad\n";
  EXPECT_THROW(text::Vocabulary::load(p), ParseError);
}

TEST(Text, TokenizeWrapsPadsAndTruncates) {
  const auto v = text::build_vocabulary({"one two three"}, 1);
  const auto t = text::tokenize("Three, one!  unknown", v, 8);
  EXPECT_EQ(t, (std::vector<int>{text::kBos, v.id("three"), v.id("one"), text::kUnk, text::kEos, 0, 0, 0}));
  const auto cut = text::tokenize("one two three one two", v, 4);
  EXPECT_EQ(cut, (std::vector<int>{text::kBos, v.id("one"), v.id("two"), text::kEos}));
  EXPECT_EQ(text::tokenize("", v, 2), (std::vector<int>{text::kBos, text::kEos}));
  EXPECT_THROW(text::tokenize("x", v, 1), ContractError);
}

TEST(Text, JsonLinesRoundTripKeepsGenerationMeta) {
  auto records = text::read_captions(data_dir() / "captions_raw.jsonl");
  ASSERT_TRUE(records[0].generation.temperature.has_value());
  EXPECT_EQ(*records[0].generation.temperature, 0.2);
  EXPECT_EQ(*records[0].generation.num_beams, 1);
  for (auto& r : records) r.pruned_text = text::prune_caption(r.raw_text);
  const auto p = temp_file("captions.jsonl");
  text::write_captions(p, records);
  const auto back = text::read_captions(p);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].image_id, records[i].image_id);
    EXPECT_EQ(back[i].temporal_index, records[i].temporal_index);
    EXPECT_EQ(back[i].raw_text, records[i].raw_text);
    EXPECT_EQ(back[i].pruned_text, records[i].pruned_text);
    EXPECT_EQ(back[i].generation.temperature, records[i].generation.temperature);
    EXPECT_EQ(back[i].generation.top_p, records[i].generation.top_p);
    EXPECT_EQ(back[i].generation.max_new_tokens, records[i].generation.max_new_tokens);
  }
}

TEST(Text, MalformedJsonReportsByteOffset) {
  const std::string good = R"({"image_id": "a", "temporal_index": 1, "raw_text": "x"})";
  const auto p = temp_file("bad.jsonl");
  std::ofstream(p) << good << "\n" << R"({"image_id": "b", "temporal_index": 1, "raw_text": )" << "\n";
  try {
    text::read_captions(p);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), good.size());
  }
  EXPECT_THROW(text::caption_from_json_line(R"({"image_id": "a", "temporal_index": 3, "raw_text": ""})"),
               ParseError);
  EXPECT_THROW(text::caption_from_json_line(R"({"image_id": "a", "raw_text": ""})"), ParseError);
  EXPECT_THROW(text::caption_from_json_line("[1, 2]"), ParseError);
  EXPECT_THROW(text::read_captions(temp_file("missing.jsonl")), IoError);
}
