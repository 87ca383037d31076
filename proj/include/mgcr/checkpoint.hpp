#pragma once

// Binary checkpoint:
//   "MGCR1\n"
//   "config <bytes>\n" <canonical config text>
//   "hash <16 hex digits>\n"      fnv1a64 of the config text
//   "epoch <n>\n"
//   "params <count>\n"
//   per parameter: "<name> <rank> <dims...>\n" then numel little-endian doubles
// and nothing after the last parameter.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mgcr/config.hpp"
#include "mgcr/nn.hpp"

namespace mgcr::ckpt {

inline constexpr const char* kMagic = "MGCR1\n";

struct StoredParam {
  std::string name;
  ag::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  RunConfig config;
  std::string config_text;
  std::size_t epoch = 0;
  std::vector<StoredParam> params;
};

std::string serialize(const nn::ParamStore& params, const RunConfig& config, std::size_t epoch);
// Throws IncompatibleCheckpoint on a bad magic or hash, CorruptCheckpoint on
// truncation, trailing bytes or a malformed descriptor.
Checkpoint deserialize(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const nn::ParamStore& params,
                     const RunConfig& config, std::size_t epoch);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies stored values into `params`. Names, order and shapes must match
// exactly, and the architecture keys of `expected` must equal the stored ones;
// otherwise IncompatibleCheckpoint.
void restore(const Checkpoint& ckpt, nn::ParamStore& params, const RunConfig& expected);

}  // namespace mgcr::ckpt
