#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "mgcr/checkpoint.hpp"
#include "mgcr/error.hpp"
#include "mgcr/fusion.hpp"
#include "mgcr/gradcheck.hpp"

using namespace mgcr;
namespace fs = std::filesystem;

namespace {

RunConfig toy_run() {
  RunConfig c;
  c.model = gradcheck::toy_model_config();
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  const RunConfig cfg = toy_run();
  model::MgcrModel a(cfg.model);
  RunConfig other_cfg = cfg;
  other_cfg.model.seed = 99;  // same architecture, different values
  model::MgcrModel b(other_cfg.model);
  const auto dir = fs::temp_directory_path() / "mgcr_ckpt_tests";
  fs::create_directories(dir);
  ckpt::save_checkpoint(dir / "a.ckpt", a.params(), cfg, 7);
  const auto loaded = ckpt::read_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.epoch, 7u);
  EXPECT_EQ(loaded.config.canonical_text(), cfg.canonical_text());
  ckpt::restore(loaded, b.params(), other_cfg);
  for (std::size_t i = 0; i < a.params().params().size(); ++i)
    EXPECT_TRUE(testutil::same_values(a.params().params()[i].value, b.params().params()[i].value));
  EXPECT_EQ(ckpt::serialize(b.params(), cfg, 7), ckpt::serialize(a.params(), cfg, 7));
}

// Independent byte count of the layout.
TEST(Checkpoint, SizeAudit) {
  const RunConfig cfg = toy_run();
  const model::MgcrModel m(cfg.model);
  const std::string text = cfg.canonical_text();
  std::size_t expect = 6 + std::string("config " + std::to_string(text.size()) + "\n").size() + text.size() +
                       std::string("hash 0123456789abcdef\n").size() + std::string("epoch 3\n").size() +
                       std::string("params " + std::to_string(m.params().params().size()) + "\n").size();
  for (const auto& p : m.params().params()) {
    std::string desc = p.name + " " + std::to_string(p.value.rank());
    for (auto d : p.value.shape()) desc += " " + std::to_string(d);
    expect += desc.size() + 1 + 8 * p.value.numel();
  }
  EXPECT_EQ(ckpt::serialize(m.params(), cfg, 3).size(), expect);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const RunConfig cfg = toy_run();
  const model::MgcrModel m(cfg.model);
  const std::string good = ckpt::serialize(m.params(), cfg, 1);
  EXPECT_NO_THROW(ckpt::deserialize(good));

  std::string bad_magic = good;
  bad_magic[3] = 'X';
  EXPECT_THROW(ckpt::deserialize(bad_magic), IncompatibleCheckpoint);

  std::string bad_config = good;
  bad_config[good.find("d = 16") + 4] = '8';
  EXPECT_THROW(ckpt::deserialize(bad_config), IncompatibleCheckpoint);

  for (const std::size_t cut : {good.size() - 1, good.size() - 8, good.size() / 2, std::size_t{20}})
    EXPECT_THROW(ckpt::deserialize(good.substr(0, cut)), CorruptCheckpoint) << cut;
  EXPECT_THROW(ckpt::deserialize(good + "x"), CorruptCheckpoint);
  EXPECT_THROW(ckpt::read_checkpoint("/nonexistent/x.ckpt"), Error);
}

TEST(Checkpoint, RestoreRejectsOtherArchitecture) {
  const RunConfig cfg = toy_run();
  const model::MgcrModel m(cfg.model);
  const auto c = ckpt::deserialize(ckpt::serialize(m.params(), cfg, 1));
  RunConfig wider = cfg;
  wider.model.d = 32;
  model::MgcrModel other(wider.model);
  EXPECT_THROW(ckpt::restore(c, other.params(), wider), IncompatibleCheckpoint);
  RunConfig ablated = cfg;
  ablated.model.use_sgcm = false;
  model::MgcrModel same_shapes(ablated.model);
  EXPECT_THROW(ckpt::restore(c, same_shapes.params(), ablated), IncompatibleCheckpoint);
  // training-only keys do not matter
  RunConfig retuned = cfg;
  retuned.train.lr = 0.01;
  model::MgcrModel fine(cfg.model);
  EXPECT_NO_THROW(ckpt::restore(c, fine.params(), retuned));
}
