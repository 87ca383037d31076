#include "mgcr/sgcm.hpp"

#include <cmath>

#include "mgcr/error.hpp"

namespace mgcr::model {

VLSequence form_vl(const Tensor& embedded, const Tensor& text) {
  if (embedded.rank() != 2 || text.rank() != 2 || embedded.cols() != text.cols())
    throw ShapeError("form_vl: width mismatch " + ag::shape_str(embedded.shape()) + " vs " +
                     ag::shape_str(text.shape()));
  return VLSequence{ag::concat({embedded, text}, 0), embedded.rows()};
}

Tensor gate_residual(const Tensor& x, const Tensor& r) {
  if (x.shape() != r.shape())
    throw ShapeError("gate_residual: shape mismatch " + ag::shape_str(x.shape()) + " vs " +
                     ag::shape_str(r.shape()));
  return ag::add(x, ag::sigmoid(r));
}

Sgcm::Sgcm(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg) : heads(cfg.heads) {
  const std::size_t d = cfg.d, nv = cfg.visual_tokens(), n = cfg.node_count(), k = cfg.conv_kernel;
  if (d % heads != 0)
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(d) + ")");
  embed = nn::make_linear(store, rng, "sgcm.embed", cfg.channels[3], d);
  position = store.add_uniform("sgcm.position", {nv, d}, 0.02, rng);
  phi = nn::make_linear(store, rng, "sgcm.phi", d, d);
  phi_norm = nn::make_layer_norm(store, "sgcm.phi_norm", d);
  theta = nn::make_linear(store, rng, "sgcm.theta", d, d);
  theta_norm = nn::make_layer_norm(store, "sgcm.theta_norm", d);
  refine_kernel = store.add_uniform("sgcm.refine.kernel", {n, n, k}, 1.0 / std::sqrt(double(n * k)), rng);
  refine_norm = nn::make_batch_norm(store, "sgcm.refine.norm", n);
  fuse_kernel = store.add_uniform("sgcm.fuse.kernel", {n, 2 * n, k}, 1.0 / std::sqrt(double(2 * n * k)), rng);
  fuse_norm = nn::make_batch_norm(store, "sgcm.fuse.norm", n);
  proj = nn::make_linear(store, rng, "sgcm.proj", n, d);
  query_vision = nn::make_linear(store, rng, "sgcm.query_vision", d, d);
  query_language = nn::make_linear(store, rng, "sgcm.query_language", d, d);
  key = nn::make_linear(store, rng, "sgcm.key", d, d);
  value = nn::make_linear(store, rng, "sgcm.value", d, d);
  out = nn::make_linear(store, rng, "sgcm.out", d, d);
}

Tensor Sgcm::embed_with_position(const Tensor& x3) const {
  if (x3.rank() != 2 || x3.rows() != position.rows())
    throw ShapeError("embed_with_position: expected " + std::to_string(position.rows()) +
                     " visual tokens, got " + ag::shape_str(x3.shape()));
  return ag::add(embed(x3), position);
}

Tensor Sgcm::build_adjacency(const VLSequence& vl) const {
  const Tensor a = phi_norm(phi(vl.tokens));
  const Tensor b = theta_norm(theta(vl.tokens));
  return ag::matmul(a, ag::transpose(b));
}

Tensor Sgcm::refine_graph(const Tensor& z, ag::NormMode mode) const {
  // conv over z^T gives [channels x length]; transposing back puts positions on
  // rows so the batch norm statistics run per channel over positions.
  const Tensor branch = refine_norm(ag::transpose(ag::conv1d(ag::transpose(z), refine_kernel)), mode);
  return ag::add(branch, z);
}

Tensor Sgcm::fuse_graph_features(const VLSequence& vl, const Tensor& z, const Tensor& Z,
                                 ag::NormMode mode) const {
  const Tensor f = ag::concat({z, Z}, 1);
  const Tensor fp = fuse_norm(ag::transpose(ag::conv1d(ag::transpose(f), fuse_kernel)), mode);
  return ag::relu(ag::add(vl.tokens, proj(fp)));
}

nn::AttentionOutput Sgcm::reconstruct(const Tensor& queries, const Tensor& vl_tokens,
                                      Modality modality) const {
  const nn::Linear& q = modality == Modality::vision ? query_vision : query_language;
  nn::AttentionOutput a = nn::attend(q(queries), key(vl_tokens), value(vl_tokens), heads);
  a.out = out(a.out);
  return a;
}

SgcmOutput Sgcm::operator()(const Tensor& x3, const Tensor& text, ag::NormMode mode,
                            bool enabled) const {
  SgcmOutput o;
  o.embedded = embed_with_position(x3);
  if (!enabled) {
    o.visual = o.embedded;
    o.text = text;
    return o;
  }
  const VLSequence vl = form_vl(o.embedded, text);
  o.trace.graph.z = build_adjacency(vl);
  o.trace.graph.Z = refine_graph(o.trace.graph.z, mode);
  o.trace.vl_tokens = fuse_graph_features(vl, o.trace.graph.z, o.trace.graph.Z, mode);
  nn::AttentionOutput vr = reconstruct(o.embedded, o.trace.vl_tokens, Modality::vision);
  nn::AttentionOutput lr = reconstruct(text, o.trace.vl_tokens, Modality::language);
  o.trace.vision_probs = std::move(vr.probs);
  o.trace.language_probs = std::move(lr.probs);
  o.trace.vision_delta = ag::sigmoid(vr.out);
  o.trace.language_delta = ag::sigmoid(lr.out);
  o.visual = ag::add(o.embedded, o.trace.vision_delta);
  o.text = ag::add(text, o.trace.language_delta);
  return o;
}

}  // namespace mgcr::model
