#pragma once

// Optimizer, schedule, training loop, evaluation and prediction.

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mgcr/config.hpp"
#include "mgcr/data.hpp"
#include "mgcr/fusion.hpp"
#include "mgcr/losses.hpp"
#include "mgcr/text.hpp"

namespace mgcr::train {

using ag::Tensor;

struct AdamState {
  std::vector<std::vector<double>> m, v;  // one slot per parameter, empty for buffers
  std::size_t t = 0;
};

// One decoupled-decay update of a flat buffer; `t` is the 1-based step.
void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::size_t t, double lr, const TrainConfig& cfg);
// Advances state.t and updates every trainable parameter from its gradient.
void adamw_step(std::vector<nn::Param>& params, AdamState& state, double lr, const TrainConfig& cfg);

// lr_min + (lr0 - lr_min) * (1 + cos(pi * epoch / max_epochs)) / 2
double cosine_lr(std::size_t epoch, std::size_t max_epochs, double lr0, double lr_min = 0.0);

struct Sample {
  std::string id;
  Tensor image1, image2;
  std::vector<int> tokens1, tokens2;
  Tensor target;                   // [H x W] of 0/1
  std::vector<std::uint8_t> mask;  // same, as bytes
};

Sample prepare(const data::PairSample& pair, const text::Vocabulary& vocab, std::size_t text_len);
std::vector<Sample> prepare_all(const std::vector<data::PairSample>& pairs, const text::Vocabulary& vocab,
                                std::size_t text_len);
text::Vocabulary vocabulary_for(const std::vector<data::PairSample>& pairs, std::size_t min_freq);

struct LossTerms {
  Tensor total, bce, mse1, mse2;
};

LossTerms compute_loss(const model::ForwardResult& r, const Tensor& target, const loss::LossWeights& w);
loss::LossWeights weights_of(const TrainConfig& cfg);

struct StepRecord {
  std::size_t epoch = 0, batch = 0;
  std::string sample;
  double total = 0, bce = 0, mse1 = 0, mse2 = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double total = 0, bce = 0, mse1 = 0, mse2 = 0;  // means over samples
  loss::MetricsReport val;
  bool best = false;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::size_t best_epoch = 0;
  double best_f1 = -1.0;
};

struct TrainOptions {
  RunConfig config;
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  std::function<void(const EpochRecord&)> on_epoch;  // optional progress hook
};

// Writes best.ckpt, last.ckpt, vocab.txt and train_log.tsv into out_dir.
TrainLog train(const TrainOptions& opts);

// In-memory variant used by train(); checkpoints are written only when
// out_dir is non-empty.
TrainLog fit(model::MgcrModel& model, const RunConfig& cfg, const std::vector<Sample>& train_set,
             const std::vector<Sample>& val_set, const std::filesystem::path& out_dir,
             const std::function<void(const EpochRecord&)>& on_epoch = {});

struct Evaluation {
  loss::MetricsReport report;  // micro-averaged
  std::vector<loss::Confusion> per_sample;
};

Evaluation evaluate(const model::MgcrModel& model, const std::vector<Sample>& samples, double threshold);

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<model::MgcrModel> model;
  text::Vocabulary vocab;
  std::size_t epoch = 0;
};

// Reads the checkpoint and the vocab.txt stored beside it.
LoadedModel load_model(const std::filesystem::path& checkpoint);

// Writes prob.pgm and pred.pgm (and heatmaps when asked); returns written paths.
std::vector<std::filesystem::path> predict(const LoadedModel& loaded, const std::filesystem::path& pair_dir,
                                           const std::filesystem::path& out_dir, bool heatmaps);

}  // namespace mgcr::train
