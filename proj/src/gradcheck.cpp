#include "mgcr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mgcr/error.hpp"
#include "mgcr/fusion.hpp"
#include "mgcr/losses.hpp"
#include "mgcr/nn.hpp"
#include "mgcr/ops.hpp"
#include "mgcr/text.hpp"
#include "mgcr/train.hpp"

namespace mgcr::gradcheck {
namespace {

Tensor random_tensor(nn::Rng& rng, ag::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ag::numel_of(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Values bounded away from zero, for ops with a kink there.
Tensor away_from_zero(nn::Rng& rng, ag::Shape shape) {
  std::vector<double> v(ag::numel_of(shape));
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

// Random linear functional of t, so every output entry gets its own weight.
Tensor project(const Tensor& t, const Tensor& weights) { return ag::sum(ag::mul(t, weights)); }

struct Case {
  std::string name;
  std::function<Result(nn::Rng&)> run;
};

Result unary(nn::Rng& rng, ag::Shape shape, const std::function<Tensor(const Tensor&)>& op, bool kink = false) {
  const Tensor x = kink ? away_from_zero(rng, shape) : random_tensor(rng, shape);
  const Tensor probe = op(x.detach());
  const Tensor w = random_tensor(rng, probe.shape());
  return check([&] { return project(op(x), w); }, {x});
}

Result binary(nn::Rng& rng, ag::Shape sa, ag::Shape sb,
              const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
  const Tensor a = random_tensor(rng, sa), b = random_tensor(rng, sb);
  const Tensor w = random_tensor(rng, op(a.detach(), b.detach()).shape());
  return check([&] { return project(op(a, b), w); }, {a, b});
}

std::vector<Case> cases() {
  using T = const Tensor&;
  std::vector<Case> c;
  c.push_back({"matmul", [](nn::Rng& r) { return binary(r, {3, 4}, {4, 5}, [](T a, T b) { return ag::matmul(a, b); }); }});
  c.push_back({"add", [](nn::Rng& r) { return binary(r, {3, 4}, {3, 4}, [](T a, T b) { return ag::add(a, b); }); }});
  c.push_back({"sub", [](nn::Rng& r) { return binary(r, {3, 4}, {3, 4}, [](T a, T b) { return ag::sub(a, b); }); }});
  c.push_back({"mul", [](nn::Rng& r) { return binary(r, {3, 4}, {3, 4}, [](T a, T b) { return ag::mul(a, b); }); }});
  c.push_back({"add_row", [](nn::Rng& r) { return binary(r, {3, 4}, {4}, [](T a, T b) { return ag::add_row(a, b); }); }});
  c.push_back({"scale", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::scale(x, -1.7); }); }});
  c.push_back({"add_scalar", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::mul(ag::add_scalar(x, 0.3), x); }); }});
  c.push_back({"relu", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::relu(x); }, true); }});
  c.push_back({"abs", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::abs(x); }, true); }});
  c.push_back({"sigmoid", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::sigmoid(ag::scale(x, 3.0)); }); }});
  c.push_back({"softmax_rows", [](nn::Rng& r) { return unary(r, {3, 5}, [](T x) { return ag::softmax(ag::scale(x, 3.0), 1); }); }});
  c.push_back({"softmax_cols", [](nn::Rng& r) { return unary(r, {4, 3}, [](T x) { return ag::softmax(ag::scale(x, 3.0), 0); }); }});
  c.push_back({"layer_norm", [](nn::Rng& r) {
                 const Tensor x = random_tensor(r, {4, 6}), g = random_tensor(r, {6}), b = random_tensor(r, {6});
                 const Tensor w = random_tensor(r, {4, 6});
                 return check([&] { return project(ag::layer_norm(x, g, b), w); }, {x, g, b});
               }});
  c.push_back({"batch_norm", [](nn::Rng& r) {
                 const Tensor x = random_tensor(r, {5, 3}), g = random_tensor(r, {3}), b = random_tensor(r, {3});
                 const Tensor w = random_tensor(r, {5, 3});
                 ag::BatchNormStats stats;
                 return check([&] { return project(ag::batch_norm_1d(x, g, b, stats, ag::NormMode::train), w); },
                              {x, g, b});
               }});
  c.push_back({"conv1d", [](nn::Rng& r) {
                 return binary(r, {3, 7}, {4, 3, 3}, [](T x, T k) { return ag::conv1d(x, k); });
               }});
  c.push_back({"sum", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { const Tensor s = ag::sum(x); return ag::mul(s, s); }); }});
  c.push_back({"mean", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { const Tensor s = ag::mean(x); return ag::mul(s, s); }); }});
  c.push_back({"sum_axis0", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::sum(x, 0); }); }});
  c.push_back({"sum_axis1", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::sum(x, 1); }); }});
  c.push_back({"mean_axis0", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::mean(x, 0); }); }});
  c.push_back({"mean_axis1", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::mean(x, 1); }); }});
  c.push_back({"concat_rows", [](nn::Rng& r) { return binary(r, {2, 3}, {4, 3}, [](T a, T b) { return ag::concat({a, b}, 0); }); }});
  c.push_back({"concat_cols", [](nn::Rng& r) { return binary(r, {3, 2}, {3, 4}, [](T a, T b) { return ag::concat({a, b}, 1); }); }});
  c.push_back({"transpose", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::transpose(x); }); }});
  c.push_back({"reshape", [](nn::Rng& r) { return unary(r, {3, 4}, [](T x) { return ag::reshape(x, {2, 6}); }); }});
  c.push_back({"slice", [](nn::Rng& r) { return unary(r, {5, 4}, [](T x) { return ag::slice(ag::slice(x, 0, 1, 3), 1, 1, 2); }); }});
  c.push_back({"embedding", [](nn::Rng& r) {
                 static const int ids[] = {0, 3, 3, 5, 1};
                 return unary(r, {6, 4}, [](T t) { return ag::embedding(t, ids); });
               }});
  c.push_back({"space_to_depth", [](nn::Rng& r) { return unary(r, {16, 2}, [](T x) { return ag::space_to_depth(x, 4, 4, 2); }); }});
  c.push_back({"upsample", [](nn::Rng& r) { return unary(r, {6, 3}, [](T x) { return ag::upsample_nearest(x, 2, 3, 2); }); }});
  c.push_back({"bce", [](nn::Rng& r) {
                 const Tensor p = random_tensor(r, {3, 4}, 0.05, 0.95);
                 std::vector<double> y(12);
                 for (double& v : y) v = r.bernoulli(0.5) ? 1.0 : 0.0;
                 const Tensor t = Tensor::from({3, 4}, y);
                 return check([&] { return loss::bce_loss(p, t); }, {p});
               }});
  c.push_back({"mse", [](nn::Rng& r) {
                 const Tensor a = random_tensor(r, {3, 4}), b = random_tensor(r, {3, 4});
                 return check([&] { return loss::mse_loss(a, b); }, {a, b});
               }});
  return c;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

Result check(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h,
             std::vector<Coordinate> coords, const std::vector<std::string>& names) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    ag::Tape tape;
    ag::TapeScope scope(tape);
    const Tensor l = loss();
    if (l.numel() != 1) throw ContractError("gradcheck: loss must be a scalar");
    tape.backward(l);
  }
  for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  if (coords.empty())
    for (std::size_t i = 0; i < inputs.size(); ++i)
      for (std::size_t k = 0; k < inputs[i].numel(); ++k) coords.push_back({i, k});

  Result r;
  for (const auto& c : coords) {
    auto data = inputs[c.tensor].mutable_data();
    const double orig = data[c.index];
    data[c.index] = orig + h;
    const double up = loss().item();
    data[c.index] = orig - h;
    const double down = loss().item();
    data[c.index] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[c.tensor][c.index];
    const double e = relative_error(a, numeric);
    ++r.checked;
    if (e > r.max_rel_err || r.worst.empty()) {
      r.max_rel_err = std::max(r.max_rel_err, e);
      char buf[256];
      const std::string name = c.tensor < names.size() ? names[c.tensor] : "input" + std::to_string(c.tensor);
      std::snprintf(buf, sizeof buf, "%s[%zu]: analytic %.10g, numeric %.10g", name.c_str(), c.index, a, numeric);
      r.worst = buf;
    }
  }
  return r;
}

std::vector<OpReport> op_suite(std::uint64_t seed, std::size_t seeds) {
  std::vector<OpReport> out;
  for (const auto& c : cases()) {
    OpReport rep{c.name, 0.0, 0, ""};
    for (std::size_t s = 0; s < seeds; ++s) {
      nn::Rng rng(seed + s);
      const Result r = c.run(rng);
      if (r.max_rel_err >= rep.max_rel_err) {
        rep.max_rel_err = r.max_rel_err;
        rep.worst = "seed " + std::to_string(seed + s) + ", " + r.worst;
      }
      ++rep.seeds;
    }
    out.push_back(rep);
  }
  return out;
}

ModelConfig toy_model_config() {
  ModelConfig c;
  c.image_size = 32;
  c.channels = {8, 8, 16, 16};
  c.d = 16;
  c.heads = 2;
  c.text_len = 8;
  c.vocab_size = 12;
  return c;
}

Result model_check(std::uint64_t seed, std::size_t samples, const ModelConfig& cfg) {
  ModelConfig mc = cfg;
  mc.seed = seed;
  model::MgcrModel model(mc);
  nn::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t s = mc.image_size;
  const Tensor img1 = random_tensor(rng, {s, s, 3}, 0.0, 1.0);
  const Tensor img2 = random_tensor(rng, {s, s, 3}, 0.0, 1.0);
  const auto caption = [&] {
    std::vector<int> ids(mc.text_len, text::kPad);
    ids[0] = text::kBos;
    const std::size_t words = 1 + rng.below(mc.text_len - 2);
    for (std::size_t i = 1; i <= words; ++i) ids[i] = static_cast<int>(4 + rng.below(mc.vocab_size - 4));
    ids[words + 1] = text::kEos;
    return ids;
  };
  const auto tok1 = caption(), tok2 = caption();
  std::vector<double> y(s * s);
  for (double& v : y) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  const Tensor target = Tensor::from({s, s}, y);

  std::vector<Tensor> inputs;
  std::vector<std::string> names;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : model.params().params()) {
    if (!p.trainable) continue;
    inputs.push_back(p.value);
    names.push_back(p.name);
    offsets.push_back(total);
    total += p.value.numel();
  }
  std::vector<Coordinate> coords;
  for (std::size_t k = 0; k < samples; ++k) {
    const std::size_t flat = rng.below(total);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat) - 1;
    const auto t = static_cast<std::size_t>(it - offsets.begin());
    coords.push_back({t, flat - *it});
  }
  const loss::LossWeights w;
  return check(
      [&] {
        const auto r = model.forward(img1, tok1, img2, tok2, ag::NormMode::train);
        return train::compute_loss(r, target, w).total;
      },
      inputs, 1e-5, coords, names);
}

}  // namespace mgcr::gradcheck
