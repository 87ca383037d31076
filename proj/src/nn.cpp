#include "mgcr/nn.hpp"

#include <cmath>
#include <limits>

#include "mgcr/error.hpp"

namespace mgcr::nn {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::below(0)");
  // Rejection sampling keeps the draw unbiased and platform independent.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

Tensor ParamStore::add(const std::string& name, Tensor value, bool trainable) {
  if (index_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
  value.set_requires_grad(trainable);
  index_[name] = params_.size();
  params_.push_back(Param{name, value, trainable});
  return value;
}

Tensor ParamStore::add_uniform(const std::string& name, ag::Shape shape, double bound, Rng& rng) {
  std::vector<double> values(ag::numel_of(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return add(name, Tensor::from(std::move(shape), std::move(values)));
}

Tensor ParamStore::add_constant(const std::string& name, ag::Shape shape, double value,
                                bool trainable) {
  return add(name, Tensor::full(std::move(shape), value), trainable);
}

const Param* ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable || !trainable_only) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

Tensor Linear::operator()(const Tensor& x) const {
  return ag::add_row(ag::matmul(x, weight), bias);
}

Linear make_linear(ParamStore& store, Rng& rng, const std::string& name, std::size_t in,
                   std::size_t out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = store.add_uniform(name + ".weight", {in, out}, bound, rng);
  l.bias = store.add_uniform(name + ".bias", {out}, bound, rng);
  return l;
}

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::size_t width) {
  return LayerNorm{store.add_constant(name + ".gamma", {width}, 1.0),
                   store.add_constant(name + ".beta", {width}, 0.0)};
}

BatchNorm make_batch_norm(ParamStore& store, const std::string& name, std::size_t channels) {
  BatchNorm bn;
  bn.gamma = store.add_constant(name + ".gamma", {channels}, 1.0);
  bn.beta = store.add_constant(name + ".beta", {channels}, 0.0);
  bn.stats = std::make_shared<ag::BatchNormStats>();
  bn.stats->mean = store.add_constant(name + ".running_mean", {channels}, 0.0, false);
  bn.stats->var = store.add_constant(name + ".running_var", {channels}, 1.0, false);
  return bn;
}

AttentionOutput attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       const std::vector<bool>& key_mask) {
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0)
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide width " +
                      std::to_string(d));
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows())
    throw ShapeError("attention: incompatible q/k/v shapes " + ag::shape_str(q.shape()) + ", " +
                     ag::shape_str(k.shape()) + ", " + ag::shape_str(v.shape()));
  const std::size_t n = k.rows();
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor mask_row;
  if (!key_mask.empty()) {
    if (key_mask.size() != n) throw ShapeError("attention: key mask length differs from key count");
    std::vector<double> m(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (key_mask[j]) m[j] = -std::numeric_limits<double>::infinity();
    mask_row = Tensor::from({n}, std::move(m));
  }

  AttentionOutput result;
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  const Tensor kt = ag::transpose(k);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : ag::slice(q, 1, h * dh, dh);
    const Tensor kth = heads == 1 ? kt : ag::slice(kt, 0, h * dh, dh);
    const Tensor vh = heads == 1 ? v : ag::slice(v, 1, h * dh, dh);
    Tensor scores = ag::scale(ag::matmul(qh, kth), inv_scale);
    if (mask_row.defined()) scores = ag::add_row(scores, mask_row);
    const Tensor p = ag::softmax(scores, 1);
    result.probs.push_back(p);
    head_out.push_back(ag::matmul(p, vh));
  }
  result.out = heads == 1 ? head_out[0] : ag::concat(head_out, 1);
  return result;
}

AttentionOutput SelfAttention::operator()(const Tensor& x, const std::vector<bool>& key_mask) const {
  AttentionOutput a = attend(q(x), k(x), v(x), heads, key_mask);
  a.out = o(a.out);
  return a;
}

SelfAttention make_self_attention(ParamStore& store, Rng& rng, const std::string& name,
                                  std::size_t width, std::size_t heads) {
  SelfAttention a;
  a.q = make_linear(store, rng, name + ".q", width, width);
  a.k = make_linear(store, rng, name + ".k", width, width);
  a.v = make_linear(store, rng, name + ".v", width, width);
  a.o = make_linear(store, rng, name + ".o", width, width);
  a.heads = heads;
  return a;
}

FeedForward make_feed_forward(ParamStore& store, Rng& rng, const std::string& name,
                              std::size_t width, std::size_t mult) {
  return FeedForward{make_linear(store, rng, name + ".up", width, width * mult),
                     make_linear(store, rng, name + ".down", width * mult, width)};
}

Tensor EncoderBlock::operator()(const Tensor& x, const std::vector<bool>& key_mask,
                                std::vector<Tensor>* probs) const {
  AttentionOutput a = attn(ln1(x), key_mask);
  if (probs) probs->insert(probs->end(), a.probs.begin(), a.probs.end());
  const Tensor h = ag::add(x, a.out);
  return ag::add(h, ffn(ln2(h)));
}

EncoderBlock make_encoder_block(ParamStore& store, Rng& rng, const std::string& name,
                                std::size_t width, std::size_t heads, std::size_t ffn_mult) {
  EncoderBlock b;
  b.ln1 = make_layer_norm(store, name + ".ln1", width);
  b.attn = make_self_attention(store, rng, name + ".attn", width, heads);
  b.ln2 = make_layer_norm(store, name + ".ln2", width);
  b.ffn = make_feed_forward(store, rng, name + ".ffn", width, ffn_mult);
  return b;
}

std::size_t heads_for(std::size_t width, std::size_t wanted) {
  for (std::size_t h = std::max<std::size_t>(wanted, 1); h > 1; --h)
    if (width % h == 0) return h;
  return 1;
}

}  // namespace mgcr::nn
