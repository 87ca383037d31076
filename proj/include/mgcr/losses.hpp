#pragma once

// Training losses and change-detection metrics.

#include <cstdint>
#include <span>
#include <string>

#include "mgcr/tensor.hpp"

namespace mgcr::loss {

using ag::Tensor;

constexpr double kBceEps = 1e-7;

struct LossWeights {
  double bce = 0.8;
  double mse1 = 0.1;
  double mse2 = 0.1;
  void validate() const;
};

// Mean binary cross-entropy; predictions are clamped to [eps, 1 - eps] and the
// clamped entries pass no gradient.
Tensor bce_loss(const Tensor& pred, const Tensor& target);
// Mean squared difference.
Tensor mse_loss(const Tensor& a, const Tensor& b);
Tensor total_loss(const Tensor& bce, const Tensor& mse1, const Tensor& mse2, const LossWeights& w);

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  Confusion& operator+=(const Confusion& o);
  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const Confusion&) const = default;
};

struct MetricsReport {
  Confusion counts;
  double f1 = 0, iou = 0, precision = 0, recall = 0;

  // "key: value" lines; scores as percentages with two decimals.
  std::string to_text() const;
  std::string to_json() const;
};

// Nonzero entries are positive (changed).
Confusion confusion_counts(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
MetricsReport compute_metrics(const Confusion& c);

// Independent per-pixel reference used to cross-check the two functions above.
MetricsReport metrics_oracle(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

std::string percent(double x);

}  // namespace mgcr::loss
