#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hgcl/tensor.hpp"

namespace hgcl::harness {

/// Procedural hierarchical fine-grained dataset description.
///
/// Every class (coarse c, fine f) shares the low-frequency motif of its coarse
/// class; fine classes within a coarse class differ only by a small patch
/// template stamped at a random location.
struct SyntheticSpec {
  std::size_t num_coarse = 4;
  std::size_t fine_per_coarse = 2;
  std::size_t grid = 16;
  std::size_t token_dim = 8;
  std::size_t signal_patch_size = 3;
  double noise_std = 1.0;
  double coarse_amplitude = 0.5;
  double patch_amplitude = 1.0;
  std::size_t samples_per_class = 100;
  std::size_t test_samples_per_class = 40;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return num_coarse * fine_per_coarse; }
  void validate() const;
};

struct Sample {
  Tensor tokens;  // grid^2 x token_dim, row-major over the grid
  int coarse = 0;
  int fine = 0;   // index within the coarse class
  int label = 0;  // coarse * fine_per_coarse + fine
  std::size_t patch_row = 0;
  std::size_t patch_col = 0;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

Dataset generate_dataset(const SyntheticSpec& spec);

/// The deterministic part of a class: coarse motif plus fine patch at (row, col).
Tensor class_template(const SyntheticSpec& spec, int label, std::size_t patch_row,
                      std::size_t patch_col);

/// 64-bit FNV-1a over the binary serialization of every sample.
std::uint64_t dataset_checksum(const Dataset& data);

/// Write `dir/train.bin`, `dir/test.bin`, `dir/labels.bin` and `dir/manifest.json`.
void save_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec, const Dataset& data);
/// Load a cache written by save_dataset; throws ValidationError on checksum mismatch.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace hgcl::harness
