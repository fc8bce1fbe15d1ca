#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hgcl/config.hpp"

namespace hgcl::harness {

struct AblationVariant {
  std::string name;
  ExperimentConfig config;  // seed field is the first seed of the variant
};

struct AblationRow {
  std::string name;
  bool saam = false;
  bool hhcl = false;
  WeightTriple weights{};
  std::vector<double> accuracies;  // final test accuracy per seed, seed order
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
};

struct AblationResult {
  std::vector<AblationRow> components;    // none, HHCL-only, SAAM-only, both
  std::vector<AblationRow> loss_weights;  // one row per declared weight triple
};

/// The four component variants of `base`: neither module, HHCL only (fixed
/// spatial regions as hierarchy leaves), SAAM only (alpha = 0) and both.
std::vector<AblationVariant> component_variants(const ExperimentConfig& base);

/// One split-mode variant per weight triple (w_hcon, w_econ, w_hpop).
std::vector<AblationVariant> weight_variants(const ExperimentConfig& base);

/// Run every variant of the declared grids over seeds seed .. seed + R - 1.
/// Runs execute on a pool of `threads` workers (0 = hardware concurrency);
/// results do not depend on the thread count. Throws ConfigError on an empty grid.
AblationResult run_ablation(const ExperimentConfig& base, unsigned threads = 0,
                            const std::function<void(const std::string&)>& progress = {});

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

std::string components_csv(const AblationResult& result);
std::string loss_weights_csv(const AblationResult& result);

/// Write components.csv and loss_weights.csv (whichever grids ran) into `dir`.
/// Refuses to replace existing tables unless `force`.
void write_ablation(const std::filesystem::path& dir, const AblationResult& result, bool force);

/// Files `write_ablation` would create for `base`.
std::vector<std::filesystem::path> ablation_outputs(const std::filesystem::path& dir,
                                                    const ExperimentConfig& base);

}  // namespace hgcl::harness
