#include "mgcr/train.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "mgcr/checkpoint.hpp"
#include "mgcr/error.hpp"
#include "mgcr/image_io.hpp"

namespace mgcr::train {
namespace fs = std::filesystem;

void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::size_t t, double lr, const TrainConfig& cfg) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
    throw ContractError("adamw_update: buffer sizes differ");
  if (t == 0) throw ContractError("adamw_update: step must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    theta[i] = theta[i] - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps) - lr * cfg.weight_decay * theta[i];
  }
}

void adamw_step(std::vector<nn::Param>& params, AdamState& state, double lr, const TrainConfig& cfg) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].trainable) {
        state.m[i].assign(params[i].value.numel(), 0.0);
        state.v[i].assign(params[i].value.numel(), 0.0);
      }
  }
  if (state.m.size() != params.size()) throw ContractError("adamw_step: optimizer state does not match parameters");
  ++state.t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    Tensor& p = params[i].value;
    if (state.m[i].size() != p.numel()) throw ContractError("adamw_step: state shape mismatch for " + params[i].name);
    const std::span<const double> g = p.grad();
    adamw_update(p.mutable_data(), g, state.m[i], state.v[i], state.t, lr, cfg);
  }
}

double cosine_lr(std::size_t epoch, std::size_t max_epochs, double lr0, double lr_min) {
  if (max_epochs == 0 || epoch > max_epochs) throw ContractError("cosine_lr: epoch outside [0, max_epochs]");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(max_epochs);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

Sample prepare(const data::PairSample& pair, const text::Vocabulary& vocab, std::size_t text_len) {
  Sample s;
  s.id = pair.id;
  s.image1 = data::image_tensor(pair.image1);
  s.image2 = data::image_tensor(pair.image2);
  s.tokens1 = text::tokenize(pair.caption(1).pruned_text, vocab, text_len);
  s.tokens2 = text::tokenize(pair.caption(2).pruned_text, vocab, text_len);
  s.mask = pair.mask;
  std::vector<double> t(pair.mask.begin(), pair.mask.end());
  s.target = Tensor::from({pair.image1.height, pair.image1.width}, std::move(t));
  return s;
}

std::vector<Sample> prepare_all(const std::vector<data::PairSample>& pairs, const text::Vocabulary& vocab,
                                std::size_t text_len) {
  std::vector<Sample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(prepare(p, vocab, text_len));
  return out;
}

text::Vocabulary vocabulary_for(const std::vector<data::PairSample>& pairs, std::size_t min_freq) {
  std::vector<std::string> corpus;
  for (const auto& p : pairs)
    for (const auto& c : p.captions) corpus.push_back(c.pruned_text);
  return text::build_vocabulary(corpus, min_freq);
}

loss::LossWeights weights_of(const TrainConfig& cfg) {
  return loss::LossWeights{cfg.lambda1, cfg.lambda2, cfg.lambda3};
}

LossTerms compute_loss(const model::ForwardResult& r, const Tensor& target, const loss::LossWeights& w) {
  LossTerms t;
  t.bce = loss::bce_loss(r.change.prob, target);
  t.mse1 = loss::mse_loss(r.branch[0].sgcm.embedded, r.branch[0].fused.visual);
  t.mse2 = loss::mse_loss(r.branch[1].sgcm.embedded, r.branch[1].fused.visual);
  t.total = loss::total_loss(t.bce, t.mse1, t.mse2, w);
  return t;
}

Evaluation evaluate(const model::MgcrModel& model, const std::vector<Sample>& samples, double threshold) {
  Evaluation e;
  loss::Confusion sum;
  for (const auto& s : samples) {
    const auto r = model.forward(s.image1, s.tokens1, s.image2, s.tokens2, ag::NormMode::infer, threshold);
    const loss::Confusion c = loss::confusion_counts(r.change.binary, s.mask);
    e.per_sample.push_back(c);
    sum += c;
  }
  e.report = loss::compute_metrics(sum);
  return e;
}

namespace {

void write_log(const fs::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch\tlr\ttotal\tbce\tmse1\tmse2\tval_f1\tval_iou\tval_precision\tval_recall\tbest\n";
  char buf[512];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.6f\t%.6f\t%.6f\t%.6f\t%d\n", e.epoch,
                  e.lr, e.total, e.bce, e.mse1, e.mse2, e.val.f1, e.val.iou, e.val.precision, e.val.recall,
                  e.best ? 1 : 0);
    out << buf;
  }
}

}  // namespace

TrainLog fit(model::MgcrModel& model, const RunConfig& cfg, const std::vector<Sample>& train_set,
             const std::vector<Sample>& val_set, const fs::path& out_dir,
             const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("training set is empty");
  const TrainConfig& tc = cfg.train;
  const loss::LossWeights weights = weights_of(tc);
  auto& params = model.params().params();
  AdamState opt;
  TrainLog log;
  nn::Rng order_rng(cfg.model.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, tc.epochs, tc.lr, tc.lr_min);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      model.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = train_set[order[k]];
        ag::Tape tape;
        ag::TapeScope scope(tape);
        const auto r = model.forward(s.image1, s.tokens1, s.image2, s.tokens2, ag::NormMode::train, tc.threshold);
        const LossTerms l = compute_loss(r, s.target, weights);
        const double total = l.total.item();
        if (!std::isfinite(total))
          throw Error("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch + 1) +
                      ", sample " + s.id + " (bce " + std::to_string(l.bce.item()) + ", mse1 " +
                      std::to_string(l.mse1.item()) + ", mse2 " + std::to_string(l.mse2.item()) + ")");
        tape.backward(ag::scale(l.total, inv));
        log.steps.push_back({epoch + 1, batch + 1, s.id, total, l.bce.item(), l.mse1.item(), l.mse2.item()});
        rec.total += total;
        rec.bce += l.bce.item();
        rec.mse1 += l.mse1.item();
        rec.mse2 += l.mse2.item();
      }
      adamw_step(params, opt, lr, tc);
    }
    const double n = static_cast<double>(train_set.size());
    rec.total /= n;
    rec.bce /= n;
    rec.mse1 /= n;
    rec.mse2 /= n;
    model.mark_stats_populated();
    rec.val = evaluate(model, val_set.empty() ? train_set : val_set, tc.threshold).report;
    if (rec.val.f1 > log.best_f1) {
      rec.best = true;
      log.best_f1 = rec.val.f1;
      log.best_epoch = rec.epoch;
      if (!out_dir.empty()) ckpt::save_checkpoint(out_dir / "best.ckpt", model.params(), cfg, rec.epoch);
    }
    log.epochs.push_back(rec);
    if (!out_dir.empty()) write_log(out_dir / "train_log.tsv", log);
    if (on_epoch) on_epoch(rec);
  }
  if (!out_dir.empty()) ckpt::save_checkpoint(out_dir / "last.ckpt", model.params(), cfg, tc.epochs);
  return log;
}

TrainLog train(const TrainOptions& opts) {
  RunConfig cfg = opts.config;
  const auto train_pairs = data::load_split(opts.data_root, "train");
  if (train_pairs.empty()) throw IoError("no training pairs under " + (opts.data_root / "train").string());
  std::vector<data::PairSample> val_pairs;
  if (fs::is_directory(opts.data_root / "val")) val_pairs = data::load_split(opts.data_root, "val");
  const text::Vocabulary vocab = vocabulary_for(train_pairs, cfg.train.min_freq);
  cfg.model.vocab_size = vocab.size();
  cfg.model.image_size = train_pairs.front().image1.width;
  cfg.validate();
  fs::create_directories(opts.out_dir);
  vocab.save(opts.out_dir / "vocab.txt");
  model::MgcrModel model(cfg.model);
  const auto train_set = prepare_all(train_pairs, vocab, cfg.model.text_len);
  const auto val_set = prepare_all(val_pairs, vocab, cfg.model.text_len);
  return fit(model, cfg, train_set, val_set, opts.out_dir, opts.on_epoch);
}

LoadedModel load_model(const fs::path& checkpoint) {
  const ckpt::Checkpoint c = ckpt::read_checkpoint(checkpoint);
  LoadedModel m;
  m.config = c.config;
  m.epoch = c.epoch;
  m.vocab = text::Vocabulary::load(checkpoint.parent_path() / "vocab.txt");
  if (m.vocab.size() != m.config.model.vocab_size)
    throw IncompatibleCheckpoint("vocab.txt has " + std::to_string(m.vocab.size()) + " tokens, checkpoint expects " +
                                 std::to_string(m.config.model.vocab_size));
  m.model = std::make_unique<model::MgcrModel>(m.config.model);
  ckpt::restore(c, m.model->params(), m.config);
  m.model->mark_stats_populated();
  return m;
}

std::vector<fs::path> predict(const LoadedModel& loaded, const fs::path& pair_dir, const fs::path& out_dir,
                              bool heatmaps) {
  const data::PairSample pair = data::load_pair(pair_dir);
  const Sample s = prepare(pair, loaded.vocab, loaded.config.model.text_len);
  const auto r = loaded.model->forward(s.image1, s.tokens1, s.image2, s.tokens2, ag::NormMode::infer,
                                       loaded.config.train.threshold);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  const auto emit = [&](const std::string& name, const io::GrayImage& img) {
    io::write_pgm(out_dir / name, img);
    written.push_back(out_dir / name);
  };
  emit("prob.pgm", io::prob_image(r.change.prob.data(), r.change.width, r.change.height));
  emit("pred.pgm", io::mask_image(r.change.binary, r.change.width, r.change.height));
  if (!heatmaps) return written;
  if (!loaded.config.model.use_sgcm) throw ConfigError("heatmaps need the graph module (use_sgcm = 1)");
  for (std::size_t b = 0; b < 2; ++b) {
    const std::string prefix = "t" + std::to_string(b + 1) + "_";
    const model::SgcmTrace& t = r.branch[b].sgcm.trace;
    const auto heat = [&](const std::string& name, const Tensor& m) {
      emit(prefix + name + ".pgm", io::heatmap_image(m.data(), m.cols(), m.rows()));
    };
    heat("graph_raw", t.graph.z);
    heat("graph_refined", t.graph.Z);
    for (std::size_t h = 0; h < t.vision_probs.size(); ++h) heat("vr_head" + std::to_string(h), t.vision_probs[h]);
    for (std::size_t h = 0; h < t.language_probs.size(); ++h) heat("lr_head" + std::to_string(h), t.language_probs[h]);
  }
  return written;
}

}  // namespace mgcr::train
