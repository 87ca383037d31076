#include "mgcr/fusion.hpp"

#include <cmath>

#include "mgcr/error.hpp"

namespace mgcr::model {

std::vector<std::uint8_t> binarize(const Tensor& prob, double threshold) {
  const auto p = prob.data();
  std::vector<std::uint8_t> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > threshold ? 1 : 0;
  return out;
}

Lvit::Lvit(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg) {
  for (std::size_t i = 0; i < cfg.lvit_layers; ++i)
    blocks.push_back(nn::make_encoder_block(store, rng, "lvit.block" + std::to_string(i), cfg.d,
                                            cfg.heads, cfg.ffn_mult));
}

FusedVL Lvit::operator()(const Tensor& visual, const Tensor& text) const {
  if (visual.cols() != text.cols())
    throw ShapeError("lvit_fuse: width mismatch " + ag::shape_str(visual.shape()) + " vs " +
                     ag::shape_str(text.shape()));
  FusedVL f;
  Tensor x = ag::concat({visual, text}, 0);
  for (const auto& block : blocks) x = block(x, {}, &f.attention);
  f.tokens = x;
  f.visual = ag::slice(x, 0, 0, visual.rows());
  f.text = ag::slice(x, 0, visual.rows(), text.rows());
  f.side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(visual.rows()))));
  return f;
}

ChangeDecoder::ChangeDecoder(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg) {
  for (std::size_t j = 0; j < 3; ++j) {
    const std::string name = "decoder.level" + std::to_string(j);
    skip[j] = nn::make_linear(store, rng, name + ".skip", cfg.channels[j], cfg.d);
    merge[j] = nn::make_linear(store, rng, name + ".merge", 2 * cfg.d, cfg.d);
  }
  head = nn::make_linear(store, rng, "decoder.head", cfg.d, 1);
}

ChangeMap ChangeDecoder::operator()(const FusedVL& fused1, const FusedVL& fused2,
                                    const FeaturePyramid& pyr1, const FeaturePyramid& pyr2,
                                    double threshold) const {
  if (fused1.visual.shape() != fused2.visual.shape() || fused1.side != fused2.side)
    throw ContractError("decode_change_map: branch shapes differ");
  for (std::size_t j = 0; j < 4; ++j)
    if (pyr1.stages[j].shape() != pyr2.stages[j].shape() || pyr1.heights[j] != pyr2.heights[j])
      throw ContractError("decode_change_map: pyramid level " + std::to_string(j) + " differs between branches");

  Tensor d = ag::abs(ag::sub(fused1.visual, fused2.visual));
  std::size_t h = pyr1.heights[3], w = pyr1.widths[3];
  for (int j = 2; j >= 0; --j) {
    const auto u = static_cast<std::size_t>(j);
    d = ag::upsample_nearest(d, h, w, 2);
    h *= 2;
    w *= 2;
    const Tensor diff = skip[u](ag::abs(ag::sub(pyr1.stages[u], pyr2.stages[u])));
    d = ag::relu(merge[u](ag::concat({d, diff}, 1)));
  }
  // A per-token linear commutes with nearest upsampling, so project first.
  const Tensor logits = ag::upsample_nearest(head(d), h, w, 4);
  ChangeMap m;
  m.height = h * 4;
  m.width = w * 4;
  m.prob = ag::reshape(ag::sigmoid(logits), {m.height, m.width});
  m.binary = binarize(m.prob, threshold);
  return m;
}

MgcrModel::MgcrModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(cfg_.seed);
  visual_ = VisualEncoder(store_, rng, cfg_);
  text_ = TextEncoder(store_, rng, cfg_);
  sgcm_ = Sgcm(store_, rng, cfg_);
  lvit_ = Lvit(store_, rng, cfg_);
  decoder_ = ChangeDecoder(store_, rng, cfg_);
}

ForwardResult MgcrModel::forward(const Tensor& image1, std::span<const int> tokens1,
                                 const Tensor& image2, std::span<const int> tokens2,
                                 ag::NormMode mode, double threshold) const {
  if (image1.shape() != image2.shape())
    throw ContractError("forward: image shapes differ " + ag::shape_str(image1.shape()) + " vs " +
                        ag::shape_str(image2.shape()));
  if (image1.rank() != 3 || image1.dim(0) != cfg_.image_size || image1.dim(1) != cfg_.image_size)
    throw ShapeError("forward: expected " + std::to_string(cfg_.image_size) + "x" +
                     std::to_string(cfg_.image_size) + "x3 images, got " + ag::shape_str(image1.shape()));
  if (tokens1.size() != cfg_.text_len || tokens2.size() != cfg_.text_len)
    throw ShapeError("forward: token sequences must have length " + std::to_string(cfg_.text_len));

  ForwardResult r;
  const Tensor* images[2] = {&image1, &image2};
  const std::span<const int> tokens[2] = {tokens1, tokens2};
  for (std::size_t i = 0; i < 2; ++i) {
    BranchResult& b = r.branch[i];
    b.pyramid = visual_(*images[i]);
    b.text = text_(tokens[i]);
    b.sgcm = sgcm_(b.pyramid.stages[3], b.text.features, mode, cfg_.use_sgcm);
    b.fused = lvit_(b.sgcm.visual, b.sgcm.text);
  }
  r.change = decoder_(r.branch[0].fused, r.branch[1].fused, r.branch[0].pyramid,
                      r.branch[1].pyramid, threshold);
  return r;
}

void MgcrModel::mark_stats_populated() {
  sgcm_.refine_norm.stats->populated = true;
  sgcm_.fuse_norm.stats->populated = true;
}

bool MgcrModel::stats_populated() const {
  return sgcm_.refine_norm.stats->populated && sgcm_.fuse_norm.stats->populated;
}

}  // namespace mgcr::model
