#include "hgcl/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

#include "hgcl/errors.hpp"
#include "hgcl/harness/model.hpp"
#include "hgcl/init.hpp"
#include "hgcl/saam.hpp"
#include "hgcl/serialize.hpp"
#include "json.hpp"

namespace hgcl::harness {
namespace {

using nlohmann::json;

struct Evaluation {
  double accuracy = 0.0;
  std::vector<IncidenceSnapshot> snapshots;
};

Evaluation evaluate(const Model& model, const std::vector<Sample>& split, std::size_t chunk,
                    std::size_t snapshots) {
  Evaluation ev;
  if (split.empty()) return ev;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < split.size(); begin += chunk) {
    const std::size_t end = std::min(split.size(), begin + chunk);
    std::vector<const Sample*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&split[i]);
    Tape tape;
    const BatchOutput out = model.forward(tape, batch, false);
    correct += count_correct(out.logits.value(), batch);
    for (std::size_t i = begin; i < end && i < snapshots && !out.incidence.empty(); ++i) {
      ev.snapshots.push_back({i, split[i].label, out.incidence[i - begin].value()});
    }
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  return ev;
}

void dump_failure(const std::filesystem::path& dir, const StepRecord& rec,
                  const std::vector<std::size_t>& indices, const std::vector<Sample>& train) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  json j = {{"step", rec.step},          {"epoch", rec.epoch}, {"ce", rec.ce},
            {"hcon", rec.hcon},          {"econ", rec.econ},   {"hpop", rec.hpop},
            {"total", rec.total},        {"learning_rate", rec.learning_rate},
            {"train_indices", indices}};
  std::vector<int> labels;
  std::vector<double> flat;
  for (std::size_t i : indices) {
    labels.push_back(train[i].label);
    flat.insert(flat.end(), train[i].tokens.data().begin(), train[i].tokens.data().end());
  }
  j["labels"] = labels;
  std::ofstream(dir / "failure.json") << j.dump(2) << '\n';
  if (!indices.empty()) {
    const Shape& s = train[indices.front()].tokens.shape();
    save_binary(dir / "failure_batch.bin", Tensor({indices.size(), s[0], s[1]}, std::move(flat)));
  }
}

std::string fmt_nonfinite(const StepRecord& r) {
  std::ostringstream os;
  os << "non-finite loss at step " << r.step << " (epoch " << r.epoch << "): ce=" << r.ce
     << " hcon=" << r.hcon << " econ=" << r.econ << " hpop=" << r.hpop << " total=" << r.total;
  return os.str();
}

// JSON numbers for doubles; non-finite values become strings so the file stays valid.
json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

}  // namespace

double cosine_learning_rate(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

RunMetrics train(const ExperimentConfig& config, const TrainOptions& options) {
  config.validate();
  return train(config, generate_dataset(config.synthetic_spec()), options);
}

RunMetrics train(const ExperimentConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  Model model(config);
  const auto& tc = config.train;

  RunMetrics metrics;
  metrics.dataset_checksum = dataset_checksum(data);
  metrics.tokens_per_side = model.backbone_shape().side(model.backbone_shape().stages() - 1);
  metrics.num_hyperedges = config.model.num_hyperedges;

  std::vector<Tensor*> params;
  model.params().visit([&](Tensor& t) { params.push_back(&t); });
  std::vector<Tensor> velocity;
  for (const Tensor* p : params) velocity.emplace_back(p->shape());

  const std::size_t n = data.train.size(), bs = tc.batch_size;
  const std::size_t per_epoch = n / bs + (n % bs >= 2 ? 1 : 0);
  const std::size_t total_steps = per_epoch * tc.epochs;

  std::mt19937_64 order_rng(derive_seed(tc.seed, "train/order"));
  std::vector<std::size_t> order(n);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochRecord er;
    er.epoch = epoch;
    std::size_t seen = 0, correct = 0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t begin = b * bs, end = std::min(n, begin + bs);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<const Sample*> batch;
      for (std::size_t i : idx) batch.push_back(&data.train[i]);

      Tape tape;
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.learning_rate = cosine_learning_rate(tc.learning_rate, step, total_steps);
      BatchOutput out;
      try {
        out = model.forward(tape, batch, true);
      } catch (const NumericalError&) {
        dump_failure(options.failure_dump, rec, idx, data.train);
        throw;
      } catch (const DomainError& e) {
        dump_failure(options.failure_dump, rec, idx, data.train);
        throw NumericalError("step " + std::to_string(step) + ": " + e.what());
      }
      rec.ce = out.ce.item();
      rec.hcon = out.hhcl.hcon.item();
      rec.econ = out.hhcl.econ.item();
      rec.hpop = out.hhcl.hpop.item();
      rec.total = out.loss.item();
      if (!std::isfinite(rec.total)) {
        dump_failure(options.failure_dump, rec, idx, data.train);
        throw NumericalError(fmt_nonfinite(rec));
      }
      tape.backward(out.loss);
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      double sq_norm = 0.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        grads.push_back(tape.grad(out.params[k]));
        if (!grads.back().all_finite()) {
          dump_failure(options.failure_dump, rec, idx, data.train);
          throw NumericalError("non-finite gradient at step " + std::to_string(step));
        }
        for (double g : grads.back().data()) sq_norm += g * g;
      }
      const double norm = std::sqrt(sq_norm);
      const double clip = tc.grad_clip > 0.0 && norm > tc.grad_clip ? tc.grad_clip / norm : 1.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto v = velocity[k].data();
        auto p = params[k]->data();
        const auto gd = grads[k].data();
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] = tc.momentum * v[i] + clip * gd[i];
          p[i] -= rec.learning_rate * v[i];
        }
      }

      for (const Var& a : out.incidence) {
        er.incidence_row_error = std::max(er.incidence_row_error, saam::incidence_row_error(a.value()));
      }
      correct += count_correct(out.logits.value(), batch);
      seen += batch.size();
      er.train_loss += rec.total;
      er.ce += rec.ce;
      er.hcon += rec.hcon;
      er.econ += rec.econ;
      er.hpop += rec.hpop;
      metrics.steps.push_back(rec);
    }
    if (per_epoch > 0) {
      const double inv = 1.0 / static_cast<double>(per_epoch);
      er.train_loss *= inv, er.ce *= inv, er.hcon *= inv, er.econ *= inv, er.hpop *= inv;
    }
    er.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    er.test_accuracy = evaluate(model, data.test, bs, 0).accuracy;
    metrics.history.push_back(er);
    if (options.on_epoch) options.on_epoch(er);
  }

  const Evaluation final_test = evaluate(model, data.test, bs, tc.snapshot_samples);
  metrics.final_test_accuracy = final_test.accuracy;
  metrics.snapshots = final_test.snapshots;
  metrics.final_train_accuracy = evaluate(model, data.train, bs, 0).accuracy;
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

std::string step_jsonl(const StepRecord& s) {
  json j = {{"step", s.step},
            {"epoch", s.epoch},
            {"learning_rate", number(s.learning_rate)},
            {"ce", number(s.ce)},
            {"hcon", number(s.hcon)},
            {"econ", number(s.econ)},
            {"hpop", number(s.hpop)},
            {"total", number(s.total)}};
  return j.dump();
}

std::string metrics_json(const RunMetrics& m, const ExperimentConfig& config) {
  json history = json::array();
  for (const auto& e : m.history) {
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", number(e.train_loss)},
                       {"ce", number(e.ce)},
                       {"hcon", number(e.hcon)},
                       {"econ", number(e.econ)},
                       {"hpop", number(e.hpop)},
                       {"train_accuracy", e.train_accuracy},
                       {"test_accuracy", e.test_accuracy},
                       {"incidence_row_error", number(e.incidence_row_error)}});
  }
  json snapshots = json::array();
  for (const auto& s : m.snapshots) {
    snapshots.push_back({{"sample_id", s.sample_id},
                         {"label", s.label},
                         {"incidence_row_error", saam::incidence_row_error(s.incidence)}});
  }
  json j = {{"epochs", config.train.epochs},
            {"seed", config.train.seed},
            {"dataset_checksum", m.dataset_checksum},
            {"overrides_from_defaults", config.overrides_from_defaults()},
            {"history", history},
            {"final_train_accuracy", m.final_train_accuracy},
            {"final_test_accuracy", m.final_test_accuracy},
            {"tokens_per_side", m.tokens_per_side},
            {"num_hyperedges", m.num_hyperedges},
            {"snapshots", snapshots}};
  return j.dump(2) + "\n";
}

void write_run(const std::filesystem::path& dir, const RunMetrics& m,
               const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream(dir / "metrics.json") << metrics_json(m, config);
  {
    std::ofstream trace(dir / "loss_trace.jsonl");
    for (const auto& s : m.steps) trace << step_jsonl(s) << '\n';
  }
  std::ofstream(dir / "timing.json") << json{{"wall_seconds", m.wall_seconds}}.dump(2) << '\n';
  std::ofstream(dir / "config.yaml") << to_yaml(config);
  const fs::path inc = dir / "incidence";
  fs::remove_all(inc);
  if (!m.snapshots.empty()) {
    fs::create_directories(inc);
    for (const auto& s : m.snapshots) {
      const std::string stem = "sample_" + std::to_string(s.sample_id);
      save_csv(inc / (stem + ".csv"), s.incidence);
      save_binary(inc / (stem + ".bin"), s.incidence);
    }
  }
}

std::vector<std::size_t> snapshot_ids(const std::filesystem::path& run_dir) {
  std::vector<std::size_t> ids;
  const auto inc = run_dir / "incidence";
  if (!std::filesystem::is_directory(inc)) return ids;
  static const std::regex pattern(R"(sample_(\d+)\.bin)");
  for (const auto& entry : std::filesystem::directory_iterator(inc)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) ids.push_back(std::stoul(m[1].str()));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Tensor load_snapshot(const std::filesystem::path& run_dir, std::size_t sample_id) {
  return load_binary(run_dir / "incidence" / ("sample_" + std::to_string(sample_id) + ".bin"));
}

void export_heatmap(const std::filesystem::path& run_dir, std::size_t sample_id) {
  const Tensor a = load_snapshot(run_dir, sample_id);
  std::ifstream is(run_dir / "metrics.json");
  if (!is) throw ValidationError("run directory has no metrics.json: " + run_dir.string());
  const json metrics = json::parse(is);
  const auto side = metrics.at("tokens_per_side").get<std::size_t>();
  if (a.rank() != 2 || a.rows() != side * side) {
    throw ValidationError("snapshot " + std::to_string(sample_id) + " has " +
                          shape_string(a.shape()) + " entries, expected " +
                          std::to_string(side * side) + " token rows");
  }
  const auto out = run_dir / "heatmaps";
  std::filesystem::create_directories(out);
  const std::string stem = "sample_" + std::to_string(sample_id);
  save_csv(out / (stem + ".csv"), a);
  json sidecar = {{"sample_id", sample_id},
                  {"tokens_per_side", side},
                  {"num_hyperedges", a.cols()},
                  {"layout", "row r is token (r / tokens_per_side, r % tokens_per_side); "
                             "column m is hyperedge m"}};
  std::ofstream(out / (stem + ".json")) << sidecar.dump(2) << '\n';
}

}  // namespace hgcl::harness
