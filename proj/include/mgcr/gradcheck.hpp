#pragma once

// Central finite-difference checks of the reverse-mode gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mgcr/config.hpp"
#include "mgcr/tensor.hpp"

namespace mgcr::gradcheck {

using ag::Tensor;

// |a - n| / max(|a|, |n|, floor)
inline constexpr double kRelFloor = 1e-6;
double relative_error(double analytic, double numeric, double floor = kRelFloor);

struct Coordinate {
  std::size_t tensor = 0;
  std::size_t index = 0;
};

struct Result {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor>[<index>]: analytic a, numeric n"
};

// `loss` must rebuild the graph from `inputs` on every call and return a
// scalar. Analytic gradients come from one backward pass; each listed
// coordinate is then perturbed by +-h. An empty coordinate list checks every
// entry of every input.
Result check(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-5,
             std::vector<Coordinate> coords = {}, const std::vector<std::string>& names = {});

struct OpReport {
  std::string op;
  double max_rel_err = 0.0;
  std::size_t seeds = 0;
  std::string worst;
};

// Every differentiable primitive on small random operands, one run per seed
// in [seed, seed + seeds).
std::vector<OpReport> op_suite(std::uint64_t seed, std::size_t seeds);

// Toy whole-model configuration: 32x32 images, d=16, text length 8, 2 heads.
ModelConfig toy_model_config();
// Full forward plus composite loss on a random pair; `samples` trainable
// scalars chosen by `seed`.
Result model_check(std::uint64_t seed, std::size_t samples, const ModelConfig& cfg = toy_model_config());

}  // namespace mgcr::gradcheck
