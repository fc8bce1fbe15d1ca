// hgcl: train, verify, ablate, export-heatmaps.
//
// Exit codes: 0 success, 1 failed verification, 2 usage or configuration
// error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hgcl/config.hpp"
#include "hgcl/errors.hpp"
#include "hgcl/harness/ablation.hpp"
#include "hgcl/harness/train.hpp"
#include "hgcl/serialize.hpp"
#include "hgcl/verify.hpp"

namespace fs = std::filesystem;
using namespace hgcl;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative output directories resolve against $HGCL_OUTPUT_ROOT when set.
fs::path output_dir(const ExperimentConfig& config) {
  fs::path dir = config.output.directory;
  if (dir.is_relative()) {
    if (const char* root = std::getenv("HGCL_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
      dir = fs::path(root) / dir;
    }
  }
  return dir;
}

ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  return load_config(path, overrides);
}

int cmd_train(const std::string& path, const std::vector<std::string>& overrides, bool force,
              bool quiet) {
  const ExperimentConfig config = load(path, overrides);
  const fs::path dir = output_dir(config);
  if (!force && fs::exists(dir / "metrics.json")) {
    throw UsageError("refusing to overwrite run in " + dir.string() + " (pass --force)");
  }
  harness::TrainOptions options;
  options.failure_dump = dir;
  if (!quiet) {
    options.on_epoch = [&](const harness::EpochRecord& e) {
      std::cout << "epoch " << e.epoch + 1 << "/" << config.train.epochs
                << "  loss " << format_double(e.train_loss) << "  train_acc " << e.train_accuracy
                << "  test_acc " << e.test_accuracy << '\n'
                << std::flush;
    };
  }
  const auto metrics = harness::train(config, options);
  harness::write_run(dir, metrics, config);
  std::cout << "final test accuracy " << metrics.final_test_accuracy << "\nwrote " << dir.string()
            << '\n';
  return kOk;
}

int cmd_verify(const std::string& suite, std::optional<double> clamp_floor) {
  verify::VerifyOptions options;
  if (clamp_floor) options.clamp_floor = *clamp_floor;
  const auto results = verify::run_suite(suite, options);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << verify::format_result(r) << '\n';
    if (!r.passed) ++failed;
  }
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kOk : kVerifyFailed;
}

int cmd_ablate(const std::string& path, const std::vector<std::string>& overrides, bool force,
               unsigned threads) {
  const ExperimentConfig config = load(path, overrides);
  const fs::path dir = output_dir(config);
  if (!force) {
    for (const auto& f : harness::ablation_outputs(dir, config)) {
      if (fs::exists(f)) throw UsageError("refusing to overwrite " + f.string() + " (pass --force)");
    }
  }
  const auto result = harness::run_ablation(config, threads, [](const std::string& line) {
    std::cout << line << '\n' << std::flush;
  });
  harness::write_ablation(dir, result, true);
  if (!result.components.empty()) std::cout << harness::components_csv(result);
  if (!result.loss_weights.empty()) std::cout << harness::loss_weights_csv(result);
  return kOk;
}

int cmd_export(const std::string& run, const std::vector<std::size_t>& requested) {
  const auto available = harness::snapshot_ids(run);
  auto listing = [&] {
    std::string s;
    for (std::size_t id : available) s += (s.empty() ? "" : ", ") + std::to_string(id);
    return s.empty() ? std::string("none") : s;
  };
  if (available.empty()) throw UsageError("no incidence snapshots in " + run);
  const auto ids = requested.empty() ? available : requested;
  for (std::size_t id : ids) {
    if (std::find(available.begin(), available.end(), id) == available.end()) {
      throw UsageError("no snapshot for sample " + std::to_string(id) + "; available: " + listing());
    }
  }
  for (std::size_t id : ids) harness::export_heatmap(run, id);
  std::cout << "exported " << ids.size() << " heatmap(s) to " << (fs::path(run) / "heatmaps").string()
            << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypergraph aggregation and hyperbolic hierarchical contrastive learning toolkit"};
  app.require_subcommand(1);

  std::string config_path, suite, run_dir;
  std::vector<std::string> overrides;
  std::vector<std::size_t> ids;
  bool force = false, quiet = false;
  unsigned threads = 0;
  std::optional<double> clamp_floor;

  auto* train = app.add_subcommand("train", "Train one model from a config file");
  train->add_option("config", config_path, "YAML config")->required();
  train->add_option("--set", overrides, "Override a value, e.g. --set train.epochs=5");
  train->add_flag("--force", force, "Replace an existing run directory");
  train->add_flag("-q,--quiet", quiet, "No per-epoch progress");

  auto* ver = app.add_subcommand("verify", "Run invariant suites");
  ver->add_option("suite", suite, "lorentz, saam, hhcl, gradients or all")->required();
  ver->add_option("--clamp-floor", clamp_floor, "Override the distance clamp (diagnostics)");

  auto* abl = app.add_subcommand("ablate", "Run the ablation grids of a config");
  abl->add_option("config", config_path, "YAML config")->required();
  abl->add_option("--set", overrides, "Override a value");
  abl->add_flag("--force", force, "Replace existing tables");
  abl->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* exp = app.add_subcommand("export-heatmaps", "Export incidence heatmaps of a run");
  exp->add_option("run", run_dir, "Run directory")->required();
  exp->add_option("ids", ids, "Sample ids (default: all snapshots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, force, quiet);
    if (*ver) return cmd_verify(suite, clamp_floor);
    if (*abl) return cmd_ablate(config_path, overrides, force, threads);
    if (*exp) return cmd_export(run_dir, ids);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
