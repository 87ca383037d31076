#pragma once

// Differentiable primitives. Unless noted, operands are 2-D [rows x cols].

#include <cstddef>
#include <span>
#include <vector>

#include "mgcr/tensor.hpp"

namespace mgcr::ag {

Tensor matmul(const Tensor& a, const Tensor& b);

// Equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a[m x n] + row[n] (row may be [n] or [1 x n]), broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);

// axis 0 or 1 for 2-D tensors (negative counts from the end); 1-D uses axis 0.
// Stabilized by subtracting the maximum; -inf entries receive probability 0.
Tensor softmax(const Tensor& x, int axis = -1);

constexpr double kLayerNormEps = 1e-5;
constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

// Normalizes each row, then gamma * xhat + beta. gamma/beta have cols() entries.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

enum class NormMode { train, infer };

// Running statistics for batch_norm_1d; not differentiated.
struct BatchNormStats {
  Tensor mean;  // [C]
  Tensor var;   // [C]
  bool populated = false;
};

// x is [batch x C]; statistics are per channel over the batch axis.
// Train mode requires batch >= 2 and folds the batch statistics into `stats`
// with momentum 0.1 (unbiased variance). Infer mode uses `stats`.
Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     BatchNormStats& stats, NormMode mode,
                     double eps = kBatchNormEps,
                     double momentum = kBatchNormMomentum);

// x [C_in x L], kernel [C_out x C_in x k] with odd k, zero padding (k-1)/2.
// Cross-correlation; output [C_out x L].
Tensor conv1d(const Tensor& x, const Tensor& kernel);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reduce a 2-D tensor along `axis`; the result is 1-D.
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// Contiguous range [start, start + length) along `axis` of a 2-D tensor.
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);

// Rows of `table` [V x d] selected by ids; ids must be < V.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// x holds a height x width grid of tokens (row-major) with C channels, shape
// [height*width x C]. Each factor x factor block becomes one token whose
// channels are ordered (dy, dx, c).
// Result: [(height/factor)*(width/factor) x factor*factor*C].
Tensor space_to_depth(const Tensor& x, std::size_t height, std::size_t width,
                      std::size_t factor);

// Nearest-neighbour upsampling of a [height*width x C] grid to
// [(height*factor)*(width*factor) x C].
Tensor upsample_nearest(const Tensor& x, std::size_t height, std::size_t width,
                        std::size_t factor);

}  // namespace mgcr::ag
