// Command-line front end: gen-data, prune, train, eval, predict, gradcheck.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgcr/config.hpp"
#include "mgcr/data.hpp"
#include "mgcr/error.hpp"
#include "mgcr/gradcheck.hpp"
#include "mgcr/simd/kernels.hpp"
#include "mgcr/text.hpp"
#include "mgcr/train.hpp"

namespace fs = std::filesystem;
using namespace mgcr;

namespace {

constexpr double kOpTolerance = 1e-5;
constexpr double kModelTolerance = 1e-3;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::string data;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.data.empty()) {
    cfg.data.data_dir = c.data;
  } else if (cfg.data.data_dir == DataConfig{}.data_dir) {
    if (const char* env = std::getenv("MGCR_DATA_DIR"); env && *env) cfg.data.data_dir = env;
  }
  cfg.validate();
  return cfg;
}

int cmd_gen_data(const Common& c) {
  RunConfig cfg = resolve_config(c);
  const fs::path root = c.out.empty() ? fs::path(cfg.data.data_dir) : fs::path(c.out);
  const auto m = data::generate_dataset(root, cfg.data);
  std::printf("wrote %zu train / %zu val / %zu test pairs under %s\n", m.train().size(), m.val().size(),
              m.test().size(), root.string().c_str());
  return 0;
}

int cmd_prune(const Common&, const std::string& input) {
  auto records = text::read_captions(input);
  for (auto& r : records) r.pruned_text = text::prune_caption(r.raw_text);
  for (const auto& r : records) std::cout << text::caption_to_json_line(r) << '\n';
  return 0;
}

int cmd_train(const Common& c) {
  train::TrainOptions opts;
  opts.config = resolve_config(c);
  opts.data_root = opts.config.data.data_dir;
  opts.out_dir = c.out.empty() ? fs::path("run") : fs::path(c.out);
  opts.on_epoch = [](const train::EpochRecord& e) {
    std::printf("epoch %3zu  lr %.3e  loss %.5f (bce %.5f mse %.5f/%.5f)  val f1 %s iou %s%s\n", e.epoch, e.lr,
                e.total, e.bce, e.mse1, e.mse2, loss::percent(e.val.f1).c_str(), loss::percent(e.val.iou).c_str(),
                e.best ? "  *" : "");
    std::fflush(stdout);
  };
  const auto log = train::train(opts);
  std::printf("best epoch %zu, val f1 %s; checkpoints in %s\n", log.best_epoch, loss::percent(log.best_f1).c_str(),
              opts.out_dir.string().c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& split) {
  const RunConfig cli = resolve_config(c);
  const auto loaded = train::load_model(checkpoint);
  const auto pairs = data::load_split(cli.data.data_dir, split);
  const auto samples = train::prepare_all(pairs, loaded.vocab, loaded.config.model.text_len);
  const auto e = train::evaluate(*loaded.model, samples, loaded.config.train.threshold);
  std::cout << e.report.to_text();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream(fs::path(c.out) / "metrics.json") << e.report.to_json() << '\n';
    std::ofstream(fs::path(c.out) / "metrics.txt") << e.report.to_text();
  }
  return 0;
}

int cmd_predict(const Common& c, const std::string& checkpoint, const std::string& pair, bool heatmaps) {
  const auto loaded = train::load_model(checkpoint);
  const fs::path out = c.out.empty() ? fs::path("prediction") : fs::path(c.out);
  for (const auto& p : train::predict(loaded, pair, out, heatmaps)) std::cout << p.string() << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, std::size_t samples) {
  bool ok = true;
  for (const auto& r : gradcheck::op_suite(seed, seeds)) {
    const bool pass = r.max_rel_err < kOpTolerance;
    ok = ok && pass;
    std::printf("%-4s %-16s max rel err %.3e over %zu seeds%s%s\n", pass ? "ok" : "FAIL", r.op.c_str(),
                r.max_rel_err, r.seeds, pass ? "" : "  worst ", pass ? "" : r.worst.c_str());
  }
  const auto m = gradcheck::model_check(seed, samples);
  const bool pass = m.max_rel_err < kModelTolerance;
  ok = ok && pass;
  std::printf("%-4s %-16s max rel err %.3e over %zu parameters  worst %s\n", pass ? "ok" : "FAIL", "model",
              m.max_rel_err, m.checked, m.worst.c_str());
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-temporal change detection with caption-conditioned graph fusion"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Config file of key = value lines");
    sub->add_option("--set", common.sets, "Override one key (key=value), repeatable");
    sub->add_option("--out", common.out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  add_common(gen);

  std::string captions;
  auto* prune = app.add_subcommand("prune", "Prune a captions.jsonl file; writes JSON lines to stdout");
  add_common(prune);
  prune->add_option("input", captions, "captions.jsonl")->required();

  auto* trn = app.add_subcommand("train", "Train a model");
  add_common(trn);
  trn->add_option("--data", common.data, "Dataset root (default: MGCR_DATA_DIR or data_dir)");

  std::string checkpoint, split = "test", pair;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--data", common.data, "Dataset root");

  bool heatmaps = false;
  auto* pred = app.add_subcommand("predict", "Predict one pair directory");
  add_common(pred);
  pred->add_option("--checkpoint", checkpoint)->required();
  pred->add_option("--pair", pair, "Directory with t1.png, t2.png, captions.jsonl")->required();
  pred->add_flag("--heatmaps", heatmaps, "Also write graph and attention heatmaps");

  std::uint64_t seed = 0;
  std::size_t seeds = 20, samples = 50;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--seed", seed);
  gc->add_option("--seeds", seeds, "Random seeds per primitive");
  gc->add_option("--samples", samples, "Sampled parameters in the whole-model check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*prune) return cmd_prune(common, captions);
    if (*trn) return cmd_train(common);
    if (*ev) return cmd_eval(common, checkpoint, split);
    if (*pred) return cmd_predict(common, checkpoint, pair, heatmaps);
    if (*gc) return cmd_gradcheck(seed, seeds, samples);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
