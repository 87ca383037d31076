#pragma once

// Joint transformer fusion, change decoder and the assembled model.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mgcr/config.hpp"
#include "mgcr/encoders.hpp"
#include "mgcr/nn.hpp"
#include "mgcr/sgcm.hpp"

namespace mgcr::model {

struct FusedVL {
  Tensor tokens;       // [N x d]
  Tensor visual;       // [N_v x d], row-major grid order
  Tensor text;         // [L_t x d]
  std::size_t side = 0;  // visual grid is side x side
  std::vector<Tensor> attention;  // per layer, per head [N x N]
};

struct ChangeMap {
  Tensor prob;  // [H x W]
  std::vector<std::uint8_t> binary;
  std::size_t height = 0, width = 0;
};

std::vector<std::uint8_t> binarize(const Tensor& prob, double threshold);

struct Lvit {
  Lvit() = default;
  Lvit(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg);
  FusedVL operator()(const Tensor& visual, const Tensor& text) const;

  std::vector<nn::EncoderBlock> blocks;
};

struct ChangeDecoder {
  ChangeDecoder() = default;
  ChangeDecoder(nn::ParamStore& store, nn::Rng& rng, const ModelConfig& cfg);
  ChangeMap operator()(const FusedVL& fused1, const FusedVL& fused2, const FeaturePyramid& pyr1,
                       const FeaturePyramid& pyr2, double threshold) const;

  std::array<nn::Linear, 3> skip;  // |X_1j - X_2j| projections, j = 0..2
  std::array<nn::Linear, 3> merge;
  nn::Linear head;
};

struct BranchResult {
  FeaturePyramid pyramid;
  TextFeatures text;
  SgcmOutput sgcm;
  FusedVL fused;
};

struct ForwardResult {
  ChangeMap change;
  std::array<BranchResult, 2> branch;
};

class MgcrModel {
 public:
  explicit MgcrModel(const ModelConfig& cfg);
  MgcrModel(const MgcrModel&) = delete;
  MgcrModel& operator=(const MgcrModel&) = delete;

  // image_i: [H x W x 3]; tokens_i: length text_len.
  ForwardResult forward(const Tensor& image1, std::span<const int> tokens1, const Tensor& image2,
                        std::span<const int> tokens2, ag::NormMode mode,
                        double threshold = 0.5) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  // Marks every batch-norm running statistic as usable for inference.
  void mark_stats_populated();
  bool stats_populated() const;

  const VisualEncoder& visual_encoder() const { return visual_; }
  const TextEncoder& text_encoder() const { return text_; }
  const Sgcm& sgcm() const { return sgcm_; }
  const Lvit& lvit() const { return lvit_; }
  const ChangeDecoder& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  nn::ParamStore store_;
  VisualEncoder visual_;
  TextEncoder text_;
  Sgcm sgcm_;
  Lvit lvit_;
  ChangeDecoder decoder_;
};

}  // namespace mgcr::model
