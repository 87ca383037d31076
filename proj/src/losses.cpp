#include "mgcr/losses.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "mgcr/error.hpp"
#include "mgcr/ops.hpp"

namespace mgcr::loss {
namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + ag::shape_str(a.shape()) + " vs " +
                     ag::shape_str(b.shape()));
}

bool wants_grad(const Tensor& a, const Tensor& b) {
  return ag::active_tape() != nullptr && (a.requires_grad() || b.requires_grad());
}

void record(ag::OpKind kind, const Tensor& a, const Tensor& b, Tensor& out,
            std::function<void(const ag::TapeNode&)> fn) {
  out.impl()->requires_grad = true;
  out.impl()->leaf = false;
  ag::active_tape()->record(ag::TapeNode{kind, {a.impl(), b.impl()}, out.impl(), std::move(fn)});
}

double* grad_of(const ag::TapeNode& n, std::size_t i) {
  ag::TensorImpl& in = *n.inputs[i];
  return in.requires_grad ? ag::grad_buffer(in).data() : nullptr;
}

}  // namespace

void LossWeights::validate() const {
  if (!(bce >= 0) || !(mse1 >= 0) || !(mse2 >= 0))
    throw ConfigError("loss weights must be non-negative");
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "bce_loss");
  const auto p = pred.data();
  const auto y = target.data();
  const std::size_t n = p.size();
  if (n == 0) throw ShapeError("bce_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::min(std::max(p[i], kBceEps), 1.0 - kBceEps);
    acc += y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  Tensor out = Tensor::scalar(-acc / static_cast<double>(n));
  if (wants_grad(pred, target)) {
    record(ag::OpKind::bce, pred, target, out, [n](const ag::TapeNode& node) {
      const double go = node.output->grad[0] / static_cast<double>(n);
      const auto& p = node.inputs[0]->data;
      const auto& y = node.inputs[1]->data;
      if (double* g = grad_of(node, 0))
        for (std::size_t i = 0; i < n; ++i) {
          if (p[i] < kBceEps || p[i] > 1.0 - kBceEps) continue;
          g[i] += go * (-(y[i] / p[i]) + (1.0 - y[i]) / (1.0 - p[i]));
        }
      if (double* g = grad_of(node, 1))
        for (std::size_t i = 0; i < n; ++i) {
          const double q = std::min(std::max(p[i], kBceEps), 1.0 - kBceEps);
          g[i] += go * (std::log(1.0 - q) - std::log(q));
        }
    });
  }
  return out;
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mse_loss");
  const auto x = a.data();
  const auto y = b.data();
  const std::size_t n = x.size();
  if (n == 0) throw ShapeError("mse_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  if (wants_grad(a, b)) {
    record(ag::OpKind::mse, a, b, out, [n](const ag::TapeNode& node) {
      const double go = 2.0 * node.output->grad[0] / static_cast<double>(n);
      const auto& x = node.inputs[0]->data;
      const auto& y = node.inputs[1]->data;
      double* ga = grad_of(node, 0);
      double* gb = grad_of(node, 1);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = go * (x[i] - y[i]);
        if (ga) ga[i] += d;
        if (gb) gb[i] -= d;
      }
    });
  }
  return out;
}

Tensor total_loss(const Tensor& bce, const Tensor& mse1, const Tensor& mse2, const LossWeights& w) {
  w.validate();
  // 1 * x and x + 0 are exact, so weights (1, 0, 0) reproduce bce bit for bit.
  const Tensor t = ag::add(ag::scale(bce, w.bce), ag::scale(mse1, w.mse1));
  return ag::add(t, ag::scale(mse2, w.mse2));
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

Confusion confusion_counts(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size())
    throw ShapeError("confusion_counts: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(gt.size()) + " labels");
  // Index by (pred, gt) pair.
  std::uint64_t bins[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < pred.size(); ++i) ++bins[(pred[i] != 0) * 2 + (gt[i] != 0)];
  Confusion c;
  c.tn = bins[0];
  c.fn = bins[1];
  c.fp = bins[2];
  c.tp = bins[3];
  return c;
}

MetricsReport compute_metrics(const Confusion& c) {
  MetricsReport r;
  r.counts = c;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp),
               fn = static_cast<double>(c.fn);
  if (c.tp + c.fp + c.fn == 0) {
    r.f1 = 1.0;
    r.iou = 1.0;
  } else {
    r.f1 = 2.0 * tp / (2.0 * tp + fp + fn);
    r.iou = tp / (tp + fp + fn);
  }
  r.precision = c.tp + c.fp == 0 ? (c.fn == 0 ? 1.0 : 0.0) : tp / (tp + fp);
  r.recall = c.tp + c.fn == 0 ? (c.fp == 0 ? 1.0 : 0.0) : tp / (tp + fn);
  return r;
}

MetricsReport metrics_oracle(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) throw ShapeError("metrics_oracle: size mismatch");
  MetricsReport r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) ++r.counts.tp;
    if (p && !g) ++r.counts.fp;
    if (!p && g) ++r.counts.fn;
    if (!p && !g) ++r.counts.tn;
  }
  const Confusion& c = r.counts;
  const auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return static_cast<double>(num) / static_cast<double>(den);
  };
  const std::uint64_t wrong = c.fp + c.fn;
  r.f1 = c.tp + wrong == 0 ? 1.0 : ratio(2 * c.tp, 2 * c.tp + wrong);
  r.iou = c.tp + wrong == 0 ? 1.0 : ratio(c.tp, c.tp + wrong);
  if (c.tp + c.fp > 0)
    r.precision = ratio(c.tp, c.tp + c.fp);
  else
    r.precision = c.fn == 0 ? 1.0 : 0.0;
  if (c.tp + c.fn > 0)
    r.recall = ratio(c.tp, c.tp + c.fn);
  else
    r.recall = c.fp == 0 ? 1.0 : 0.0;
  return r;
}

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x * 100.0);
  return buf;
}

std::string MetricsReport::to_text() const {
  std::string s;
  s += "f1: " + percent(f1) + "\n";
  s += "iou: " + percent(iou) + "\n";
  s += "precision: " + percent(precision) + "\n";
  s += "recall: " + percent(recall) + "\n";
  s += "tp: " + std::to_string(counts.tp) + "\n";
  s += "fp: " + std::to_string(counts.fp) + "\n";
  s += "fn: " + std::to_string(counts.fn) + "\n";
  s += "tn: " + std::to_string(counts.tn) + "\n";
  return s;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["f1"] = f1;
  j["iou"] = iou;
  j["precision"] = precision;
  j["recall"] = recall;
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["fn"] = counts.fn;
  j["tn"] = counts.tn;
  return j.dump(2);
}

}  // namespace mgcr::loss
