#include <gtest/gtest.h>

#include "mgcr/config.hpp"
#include "mgcr/error.hpp"

using namespace mgcr;

TEST(Config, ParseCommentsBlanksAndLists) {
  const auto c = RunConfig::parse("# run\n\nd = 32   # width\nchannels = 8, 16,32,64\nsplit = 6:3:1\nuse_sgcm = off\nlr=1e-3\n");
  EXPECT_EQ(c.model.d, 32u);
  EXPECT_EQ(c.model.channels, (std::array<std::size_t, 4>{8, 16, 32, 64}));
  EXPECT_EQ(c.data.split, (std::array<double, 3>{6, 3, 1}));
  EXPECT_FALSE(c.model.use_sgcm);
  EXPECT_EQ(c.train.lr, 1e-3);
}

TEST(Config, UnknownKeyListsValidKeys) {
  try {
    RunConfig::parse("learning_rate = 0.1\n");
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
    for (const auto& k : RunConfig::keys()) EXPECT_NE(msg.find(k), std::string::npos) << k;
  }
}

TEST(Config, BadValuesAreConfigErrors) {
  EXPECT_THROW(RunConfig::parse("d = -3"), ConfigError);
  EXPECT_THROW(RunConfig::parse("d = 3x"), ConfigError);
  EXPECT_THROW(RunConfig::parse("channels = 1,2,3"), ConfigError);
  EXPECT_THROW(RunConfig::parse("use_sgcm = maybe"), ConfigError);
  EXPECT_THROW(RunConfig::parse("just words"), ConfigError);
  RunConfig c;
  c.model.image_size = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.model.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.model.conv_kernel = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.data.tile = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.train.epochs = 301;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(Config, CanonicalTextRoundTrips) {
  auto c = RunConfig::parse("lr = 0.1\nchange_prob = 0.3\nseed = 9\n");
  const auto text = c.canonical_text();
  const auto back = RunConfig::parse(text);
  EXPECT_EQ(back.canonical_text(), text);
  EXPECT_EQ(back.train.lr, 0.1);
  EXPECT_EQ(back.data.change_prob, 0.3);
  // sorted keys, one per line
  EXPECT_EQ(text.rfind("adam_eps = ", 0), 0u);
}

TEST(Config, ModelTextIgnoresTrainingKeys) {
  RunConfig a, b;
  b.train.lr = 0.5;
  b.model.seed = 7;
  b.data.pairs = 3;
  EXPECT_EQ(a.model_text(), b.model_text());
  b.model.d = 32;
  EXPECT_NE(a.model_text(), b.model_text());
}

TEST(Config, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
