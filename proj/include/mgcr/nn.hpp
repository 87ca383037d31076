#pragma once

// Parameter registry and the small layer vocabulary shared by all model parts.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mgcr/ops.hpp"
#include "mgcr/tensor.hpp"

namespace mgcr::nn {

using ag::NormMode;
using ag::Tensor;

// Deterministic generator; mt19937_64 output is fixed by the standard and
// the conversions below avoid implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);  // [0, n)
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Parameters in registration order. The order defines the checkpoint layout.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value, bool trainable = true);
  // Uniform in +-bound.
  Tensor add_uniform(const std::string& name, ag::Shape shape, double bound, Rng& rng);
  Tensor add_constant(const std::string& name, ag::Shape shape, double value, bool trainable = true);

  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  const Param* find(const std::string& name) const;
  std::size_t scalar_count(bool trainable_only = true) const;
  void zero_grad();

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
  Tensor operator()(const Tensor& x) const;
};

// Weights and bias uniform in +-1/sqrt(fan_in).
Linear make_linear(ParamStore& store, Rng& rng, const std::string& name, std::size_t in,
                   std::size_t out);

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
};

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, std::size_t width);

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::shared_ptr<ag::BatchNormStats> stats;  // running mean/var registered as buffers
  Tensor operator()(const Tensor& x, NormMode mode) const {
    return ag::batch_norm_1d(x, gamma, beta, *stats, mode);
  }
};

BatchNorm make_batch_norm(ParamStore& store, const std::string& name, std::size_t channels);

struct AttentionOutput {
  Tensor out;                 // [M x d]
  std::vector<Tensor> probs;  // per head [M x N]
};

// Multi-head scaled dot-product attention of queries [M x d] against already
// projected keys/values [N x d]. Scale is 1/sqrt(d/heads) per head.
// `key_mask`, when non-empty, marks keys that must receive zero weight.
AttentionOutput attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       const std::vector<bool>& key_mask = {});

struct SelfAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;
  AttentionOutput operator()(const Tensor& x, const std::vector<bool>& key_mask = {}) const;
};

SelfAttention make_self_attention(ParamStore& store, Rng& rng, const std::string& name,
                                  std::size_t width, std::size_t heads);

struct FeedForward {
  Linear up, down;
  Tensor operator()(const Tensor& x) const { return down(ag::relu(up(x))); }
};

FeedForward make_feed_forward(ParamStore& store, Rng& rng, const std::string& name,
                              std::size_t width, std::size_t mult);

// Pre-norm block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct EncoderBlock {
  LayerNorm ln1, ln2;
  SelfAttention attn;
  FeedForward ffn;
  Tensor operator()(const Tensor& x, const std::vector<bool>& key_mask = {},
                    std::vector<Tensor>* probs = nullptr) const;
};

EncoderBlock make_encoder_block(ParamStore& store, Rng& rng, const std::string& name,
                                std::size_t width, std::size_t heads, std::size_t ffn_mult);

// Largest head count <= wanted that divides width.
std::size_t heads_for(std::size_t width, std::size_t wanted);

}  // namespace mgcr::nn
