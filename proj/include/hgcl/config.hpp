#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hgcl/harness/dataset.hpp"
#include "hgcl/hhcl.hpp"

namespace hgcl {

struct ModelConfig {
  std::size_t stages = 3;
  std::vector<std::size_t> widths{16, 32, 64};
  std::vector<std::size_t> heads{1, 2, 2};
  std::size_t num_hyperedges = 16;
  std::size_t key_dim = 16;
  std::vector<std::size_t> fusion_ratios{16, 8, 4, 1};
  bool normalize_hyperedges = false;
  hhcl::ContrastLevels contrast_levels = hhcl::ContrastLevels::Root;
  bool saam = true;
  bool gate_closed = false;

  bool operator==(const ModelConfig&) const = default;
};

struct LossConfig {
  hhcl::LossMode mode = hhcl::LossMode::Split;
  double alpha = 1.0;
  double lambda = 1.0;
  double tau = 0.1;
  double beta = 0.1;
  double w_hcon = 0.1;
  double w_econ = 0.1;
  double w_hpop = 0.1;
  double curvature = 0.1;

  hhcl::LossWeights weights() const;
  bool operator==(const LossConfig&) const = default;
};

struct DataConfig {
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

  bool operator==(const DataConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double grad_clip = 1.0;  // global gradient-norm cap; 0 disables
  std::uint64_t seed = 1;
  std::size_t snapshot_samples = 4;

  bool operator==(const TrainConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "runs/default";

  bool operator==(const OutputConfig&) const = default;
};

using WeightTriple = std::array<double, 3>;  // (w_hcon, w_econ, w_hpop)

struct AblationConfig {
  bool components = true;
  std::vector<WeightTriple> loss_weights;
  std::size_t seeds = 5;

  bool operator==(const AblationConfig&) const = default;
};

/// Every hyperparameter of a run. Defaults carry the published hyperparameters
/// (M = 16, curvature 0.1, tau 0.1, lambda 1.0, beta 0.1, fusion ratios
/// 16/8/4/1) on top of the desk-scale backbone and dataset.
struct ExperimentConfig {
  ModelConfig model;
  LossConfig loss;
  DataConfig data;
  TrainConfig train;
  OutputConfig output;
  AblationConfig ablation;

  /// Desk-scale preset: M = 8 and fusion ratios 8/4/1.
  static ExperimentConfig toy_defaults();

  /// Dataset description; its seed is derived from train.seed.
  harness::SyntheticSpec synthetic_spec() const;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;

  /// Dotted keys whose values differ from the published defaults.
  std::vector<std::string> overrides_from_defaults() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parse YAML text. Unknown keys, wrong types and invalid values raise
/// ConfigError naming the line and dotted field.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Apply `section.key=value` overrides (value parsed as YAML) before decoding.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides);

std::string to_yaml(const ExperimentConfig& config);

}  // namespace hgcl
