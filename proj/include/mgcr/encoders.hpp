#pragma once

// Siamese pyramid visual encoder and transformer text encoder.

#include <array>
#include <span>
#include <vector>

#include "mgcr/config.hpp"
#include "mgcr/nn.hpp"

namespace mgcr::model {

using ag::Tensor;

// Four stages; stage j is a (H/(4*2^j)) x (W/(4*2^j)) token grid stored
// row-major as [tokens x C_j].
struct FeaturePyramid {
  std::array<Tensor, 4> stages;
  std::array<std::size_t, 4> heights{};
  std::array<std::size_t, 4> widths{};
};

struct TextFeatures {
  Tensor features;               // [L_t x d]
  std::vector<bool> pad_mask;    // true at PAD positions
  std::vector<Tensor> attention;  // per block, per head [L_t x L_t]
};

class VisualEncoder {
 public:
  VisualEncoder() = default;
  VisualEncoder(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg);

  // image: [H x W x 3] with H, W divisible by 32.
  FeaturePyramid operator()(const Tensor& image) const;

 private:
  std::array<std::size_t, 4> channels_{};
  nn::Linear patch_embed_;
  nn::LayerNorm stage0_norm_;
  std::array<nn::Linear, 3> merge_;
  std::array<nn::EncoderBlock, 3> blocks_;
};

class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg);

  TextFeatures operator()(std::span<const int> token_ids) const;

  // Fixed sinusoidal table [length x width].
  static Tensor sinusoidal_positions(std::size_t length, std::size_t width);

 private:
  std::size_t width_ = 0;
  Tensor table_;
  std::vector<nn::EncoderBlock> blocks_;
};

}  // namespace mgcr::model
