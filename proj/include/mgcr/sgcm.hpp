#pragma once

// Graph-conditioned vision-language reconstruction.

#include <vector>

#include "mgcr/config.hpp"
#include "mgcr/nn.hpp"

namespace mgcr::model {

using ag::Tensor;

struct VLSequence {
  Tensor tokens;             // [N x d]
  std::size_t boundary = 0;  // rows [0, boundary) are visual
};

struct AdjacencyGraph {
  Tensor z;  // [N x N]
  Tensor Z;  // [N x N]
};

enum class Modality { vision, language };

struct SgcmTrace {
  AdjacencyGraph graph;
  Tensor vl_tokens;
  std::vector<Tensor> vision_probs;    // per head [N_v x N]
  std::vector<Tensor> language_probs;  // per head [L_t x N]
  Tensor vision_delta;                 // sigmoid(VR)
  Tensor language_delta;               // sigmoid(LR)
};

struct SgcmOutput {
  Tensor embedded;  // E, [N_v x d]
  Tensor visual;    // gated visual tokens
  Tensor text;      // gated text tokens
  SgcmTrace trace;  // empty when the graph path is disabled
};

// VL = [E; T] along the token axis.
VLSequence form_vl(const Tensor& embedded, const Tensor& text);

// X + sigmoid(R).
Tensor gate_residual(const Tensor& x, const Tensor& r);

struct Sgcm {
  Sgcm() = default;
  Sgcm(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg);

  // x3: flattened deepest grid [N_v x C3].
  Tensor embed_with_position(const Tensor& x3) const;
  // LN(phi(VL)) * LN(theta(VL))^T
  Tensor build_adjacency(const VLSequence& vl) const;
  // BN(conv(z^T))^T + z
  Tensor refine_graph(const Tensor& z, ag::NormMode mode) const;
  // relu(VL + Proj(BN(conv([z, Z]^T))^T))
  Tensor fuse_graph_features(const VLSequence& vl, const Tensor& z, const Tensor& Z,
                             ag::NormMode mode) const;
  nn::AttentionOutput reconstruct(const Tensor& queries, const Tensor& vl_tokens,
                                  Modality modality) const;

  SgcmOutput operator()(const Tensor& x3, const Tensor& text, ag::NormMode mode,
                        bool enabled = true) const;

  std::size_t heads = 1;
  nn::Linear embed;
  Tensor position;  // [N_v x d]
  nn::Linear phi, theta;
  nn::LayerNorm phi_norm, theta_norm;
  Tensor refine_kernel;  // [N x N x k]
  nn::BatchNorm refine_norm;
  Tensor fuse_kernel;  // [N x 2N x k]
  nn::BatchNorm fuse_norm;
  nn::Linear proj;  // N -> d
  nn::Linear query_vision, query_language, key, value, out;
};

}  // namespace mgcr::model
