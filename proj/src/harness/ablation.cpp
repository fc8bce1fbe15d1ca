#include "hgcl/harness/ablation.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "hgcl/errors.hpp"
#include "hgcl/harness/train.hpp"
#include "hgcl/serialize.hpp"

namespace hgcl::harness {
namespace {

struct Job {
  std::size_t row;
  bool weight_grid;
  std::size_t seed_index;
  ExperimentConfig config;
};

AblationRow make_row(const AblationVariant& v) {
  AblationRow r;
  r.name = v.name;
  r.saam = v.config.model.saam;
  r.hhcl = v.config.loss.alpha > 0.0;
  r.weights = {v.config.loss.w_hcon, v.config.loss.w_econ, v.config.loss.w_hpop};
  return r;
}

std::string table(const std::vector<AblationRow>& rows, bool with_weights) {
  std::ostringstream os;
  os << "variant,saam,hhcl";
  if (with_weights) os << ",w_hcon,w_econ,w_hpop";
  os << ",seeds,mean_accuracy,std_accuracy";
  const std::size_t seeds = rows.empty() ? 0 : rows.front().accuracies.size();
  for (std::size_t s = 0; s < seeds; ++s) os << ",accuracy_seed" << s;
  os << '\n';
  for (const auto& r : rows) {
    os << r.name << ',' << (r.saam ? 1 : 0) << ',' << (r.hhcl ? 1 : 0);
    if (with_weights) {
      for (double w : r.weights) os << ',' << format_double(w);
    }
    os << ',' << r.accuracies.size() << ',' << format_double(r.mean) << ','
       << format_double(r.stddev);
    for (double a : r.accuracies) os << ',' << format_double(a);
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::vector<AblationVariant> component_variants(const ExperimentConfig& base) {
  const double alpha = base.loss.alpha > 0.0 ? base.loss.alpha : 1.0;
  auto variant = [&](const char* name, bool saam, bool hhcl) {
    ExperimentConfig c = base;
    c.model.saam = saam;
    c.model.gate_closed = false;
    c.loss.alpha = hhcl ? alpha : 0.0;
    return AblationVariant{name, c};
  };
  return {variant("none", false, false), variant("hhcl_only", false, true),
          variant("saam_only", true, false), variant("both", true, true)};
}

std::vector<AblationVariant> weight_variants(const ExperimentConfig& base) {
  std::vector<AblationVariant> out;
  for (const auto& w : base.ablation.loss_weights) {
    ExperimentConfig c = base;
    c.model.saam = true;
    c.model.gate_closed = false;
    c.loss.mode = hhcl::LossMode::Split;
    if (c.loss.alpha <= 0.0) c.loss.alpha = 1.0;
    c.loss.w_hcon = w[0], c.loss.w_econ = w[1], c.loss.w_hpop = w[2];
    out.push_back({"w_" + format_double(w[0]) + "_" + format_double(w[1]) + "_" +
                       format_double(w[2]),
                   c});
  }
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

AblationResult run_ablation(const ExperimentConfig& base, unsigned threads,
                            const std::function<void(const std::string&)>& progress) {
  base.validate();
  std::vector<AblationVariant> comps, weights;
  if (base.ablation.components) comps = component_variants(base);
  weights = weight_variants(base);
  if (comps.empty() && weights.empty()) {
    throw ConfigError("ablation grid is empty: enable ablation.components or list ablation.loss_weights");
  }
  for (const auto& v : comps) v.config.validate();
  for (const auto& v : weights) v.config.validate();

  AblationResult result;
  std::vector<Job> jobs;
  const std::size_t seeds = base.ablation.seeds;
  auto enqueue = [&](const std::vector<AblationVariant>& vs, bool grid,
                     std::vector<AblationRow>& rows) {
    for (std::size_t r = 0; r < vs.size(); ++r) {
      rows.push_back(make_row(vs[r]));
      rows.back().accuracies.assign(seeds, 0.0);
      for (std::size_t s = 0; s < seeds; ++s) {
        ExperimentConfig c = vs[r].config;
        c.train.seed = base.train.seed + s;
        jobs.push_back({r, grid, s, std::move(c)});
      }
    }
  };
  enqueue(comps, false, result.components);
  enqueue(weights, true, result.loss_weights);

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs.size()));
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const Job& job = jobs[j];
      try {
        const RunMetrics m = train(job.config);
        std::lock_guard lock(mu);
        auto& row = (job.weight_grid ? result.loss_weights : result.components)[job.row];
        row.accuracies[job.seed_index] = m.final_test_accuracy;
        if (progress) {
          progress(row.name + " seed " + std::to_string(job.config.train.seed) +
                   ": test accuracy " + format_double(m.final_test_accuracy));
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (auto* rows : {&result.components, &result.loss_weights}) {
    for (auto& r : *rows) std::tie(r.mean, r.stddev) = mean_std(r.accuracies);
  }
  return result;
}

std::string components_csv(const AblationResult& result) { return table(result.components, false); }

std::string loss_weights_csv(const AblationResult& result) {
  return table(result.loss_weights, true);
}

std::vector<std::filesystem::path> ablation_outputs(const std::filesystem::path& dir,
                                                    const ExperimentConfig& base) {
  std::vector<std::filesystem::path> out;
  if (base.ablation.components) out.push_back(dir / "components.csv");
  if (!base.ablation.loss_weights.empty()) out.push_back(dir / "loss_weights.csv");
  return out;
}

void write_ablation(const std::filesystem::path& dir, const AblationResult& result, bool force) {
  std::vector<std::pair<std::filesystem::path, std::string>> files;
  if (!result.components.empty()) files.emplace_back(dir / "components.csv", components_csv(result));
  if (!result.loss_weights.empty()) {
    files.emplace_back(dir / "loss_weights.csv", loss_weights_csv(result));
  }
  if (!force) {
    for (const auto& [path, _] : files) {
      if (std::filesystem::exists(path)) {
        throw ConfigError("refusing to overwrite " + path.string() + " (pass --force)");
      }
    }
  }
  std::filesystem::create_directories(dir);
  for (const auto& [path, text] : files) std::ofstream(path) << text;
}

}  // namespace hgcl::harness
