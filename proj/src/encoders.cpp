#include "mgcr/encoders.hpp"

#include <cmath>

#include "mgcr/error.hpp"
#include "mgcr/text.hpp"

namespace mgcr::model {

VisualEncoder::VisualEncoder(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg)
    : channels_(cfg.channels) {
  patch_embed_ = nn::make_linear(store, rng, "visual.stage0.patch", 4 * 4 * 3, channels_[0]);
  stage0_norm_ = nn::make_layer_norm(store, "visual.stage0.norm", channels_[0]);
  for (std::size_t j = 1; j < 4; ++j) {
    const std::string name = "visual.stage" + std::to_string(j);
    merge_[j - 1] = nn::make_linear(store, rng, name + ".merge", 4 * channels_[j - 1], channels_[j]);
    blocks_[j - 1] = nn::make_encoder_block(store, rng, name + ".block", channels_[j],
                                            nn::heads_for(channels_[j], cfg.heads), cfg.ffn_mult);
  }
}

FeaturePyramid VisualEncoder::operator()(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw ShapeError("encode_visual expects an [H x W x 3] image, got " + ag::shape_str(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (h % 32 != 0 || w % 32 != 0)
    throw ConfigError("image sides must be divisible by 32, got " + std::to_string(h) + "x" +
                      std::to_string(w));
  FeaturePyramid pyr;
  const Tensor pixels = ag::reshape(image, {h * w, 3});
  Tensor x = stage0_norm_(patch_embed_(ag::space_to_depth(pixels, h, w, 4)));
  pyr.stages[0] = x;
  pyr.heights[0] = h / 4;
  pyr.widths[0] = w / 4;
  for (std::size_t j = 1; j < 4; ++j) {
    x = merge_[j - 1](ag::space_to_depth(x, pyr.heights[j - 1], pyr.widths[j - 1], 2));
    x = blocks_[j - 1](x);
    pyr.stages[j] = x;
    pyr.heights[j] = pyr.heights[j - 1] / 2;
    pyr.widths[j] = pyr.widths[j - 1] / 2;
  }
  return pyr;
}

TextEncoder::TextEncoder(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg)
    : width_(cfg.d) {
  table_ = store.add_uniform("text.embedding", {cfg.vocab_size, cfg.d}, 1.0 / std::sqrt(double(cfg.d)), rng);
  for (std::size_t i = 0; i < cfg.text_layers; ++i)
    blocks_.push_back(nn::make_encoder_block(store, rng, "text.block" + std::to_string(i), cfg.d,
                                             cfg.heads, cfg.ffn_mult));
}

Tensor TextEncoder::sinusoidal_positions(std::size_t length, std::size_t width) {
  std::vector<double> pe(length * width);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * freq;
      pe[pos * width + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({length, width}, std::move(pe));
}

TextFeatures TextEncoder::operator()(std::span<const int> token_ids) const {
  TextFeatures out;
  out.pad_mask.resize(token_ids.size());
  bool any_visible = false;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    out.pad_mask[i] = token_ids[i] == text::kPad;
    any_visible = any_visible || !out.pad_mask[i];
  }
  if (!any_visible) throw ContractError("encode_text: token sequence is entirely padding");
  Tensor x = ag::add(ag::embedding(table_, token_ids), sinusoidal_positions(token_ids.size(), width_));
  for (const auto& block : blocks_) x = block(x, out.pad_mask, &out.attention);
  out.features = x;
  return out;
}

}  // namespace mgcr::model
