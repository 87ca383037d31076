#pragma once

// Flat `key = value` run configuration shared by every subcommand.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgcr {

struct ModelConfig {
  std::size_t image_size = 64;
  std::array<std::size_t, 4> channels{32, 64, 128, 256};
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t text_len = 16;
  std::size_t vocab_size = 4;
  std::size_t text_layers = 2;
  std::size_t lvit_layers = 2;
  std::size_t ffn_mult = 4;
  std::size_t conv_kernel = 3;
  bool use_sgcm = true;
  std::uint64_t seed = 0;

  std::size_t grid_side() const { return image_size / 32; }
  std::size_t visual_tokens() const { return grid_side() * grid_side(); }
  std::size_t node_count() const { return visual_tokens() + text_len; }
  // Throws ConfigError.
  void validate() const;
};

struct DataConfig {
  std::string data_dir = "data";
  std::size_t pairs = 200;
  std::size_t canvas = 64;
  std::size_t tile = 64;
  std::size_t n_min = 2;
  std::size_t n_max = 6;
  double change_prob = 0.5;
  double texture_amp = 0.15;
  double noise_amp = 0.02;
  std::array<double, 3> split{7, 2, 1};
  std::uint64_t data_seed = 1;
  void validate() const;
};

struct TrainConfig {
  double lr = 5e-4;
  double lr_min = 0.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lambda1 = 0.8;
  double lambda2 = 0.1;
  double lambda3 = 0.1;
  double threshold = 0.5;
  std::size_t min_freq = 1;
  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;

  // Throws UsageError for unknown keys, ConfigError for bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void validate() const;

  // Sorted `key = value` lines; doubles printed with round-trip precision.
  std::string canonical_text() const;
  // Subset that determines parameter shapes and forward semantics.
  std::string model_text() const;

  static std::vector<std::string> keys();
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

// Unknown configuration key; message lists every valid key.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace mgcr
