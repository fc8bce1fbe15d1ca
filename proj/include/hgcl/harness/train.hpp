#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hgcl/config.hpp"
#include "hgcl/harness/dataset.hpp"
#include "hgcl/tensor.hpp"

namespace hgcl::harness {

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double ce = 0.0;
  double hcon = 0.0;
  double econ = 0.0;
  double hpop = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean total loss over the epoch's steps
  double ce = 0.0;
  double hcon = 0.0;
  double econ = 0.0;
  double hpop = 0.0;
  double train_accuracy = 0.0;  // on the batches as they were trained
  double test_accuracy = 0.0;
  double incidence_row_error = 0.0;  // max over the epoch, 0 without SAAM
};

struct IncidenceSnapshot {
  std::size_t sample_id = 0;  // index into the test split
  int label = 0;
  Tensor incidence;           // N x M
};

struct RunMetrics {
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  std::uint64_t dataset_checksum = 0;
  std::size_t tokens_per_side = 0;  // final-stage grid side
  std::size_t num_hyperedges = 0;
  std::vector<IncidenceSnapshot> snapshots;
  double wall_seconds = 0.0;  // kept out of metrics.json
};

/// Where to write the offending batch if the loss turns non-finite.
struct TrainOptions {
  std::filesystem::path failure_dump;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch SGD with momentum and a cosine-decayed learning rate.
///
/// Every random choice (data, initialization, batch order) derives from
/// `config.train.seed`; the run is bit-reproducible. A trailing batch with a
/// single sample is dropped because the contrastive term needs two.
/// Throws NumericalError when the loss or a gradient becomes non-finite.
RunMetrics train(const ExperimentConfig& config, const TrainOptions& options = {});
RunMetrics train(const ExperimentConfig& config, const Dataset& data,
                 const TrainOptions& options = {});

/// Cosine schedule: base * (1 + cos(pi * step / total)) / 2.
double cosine_learning_rate(double base, std::size_t step, std::size_t total);

std::string metrics_json(const RunMetrics& metrics, const ExperimentConfig& config);
std::string step_jsonl(const StepRecord& step);

/// metrics.json, loss_trace.jsonl, timing.json, config.yaml and
/// incidence/sample_<id>.{csv,bin} under `dir`.
void write_run(const std::filesystem::path& dir, const RunMetrics& metrics,
               const ExperimentConfig& config);

/// Sample ids with an incidence snapshot under `run_dir`, ascending.
std::vector<std::size_t> snapshot_ids(const std::filesystem::path& run_dir);
Tensor load_snapshot(const std::filesystem::path& run_dir, std::size_t sample_id);

/// Write heatmaps/sample_<id>.csv (N x M) and a JSON sidecar giving the grid
/// side needed to reshape each column into a spatial map.
void export_heatmap(const std::filesystem::path& run_dir, std::size_t sample_id);

}  // namespace hgcl::harness
