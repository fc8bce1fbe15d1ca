#include "hgcl/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "hgcl/errors.hpp"
#include "hgcl/harness/backbone.hpp"
#include "hgcl/init.hpp"
#include "hgcl/saam.hpp"

namespace hgcl {
namespace {

std::string where(const YAML::Node& node) {
  const YAML::Mark mark = node.Mark();
  if (mark.line < 0) return "";
  return "line " + std::to_string(mark.line + 1) + ": ";
}

[[noreturn]] void bad_value(const YAML::Node& node, const std::string& field, const char* expected) {
  throw ConfigError(where(node) + "field '" + field + "': expected " + expected);
}

template <typename T>
T scalar_as(const YAML::Node& node, const std::string& field, const char* expected) {
  if (!node.IsScalar()) bad_value(node, field, expected);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    bad_value(node, field, expected);
  }
}

void decode(const YAML::Node& n, const std::string& f, double& out) {
  out = scalar_as<double>(n, f, "a number");
}

void decode(const YAML::Node& n, const std::string& f, bool& out) {
  out = scalar_as<bool>(n, f, "true or false");
}

void decode(const YAML::Node& n, const std::string& f, std::string& out) {
  out = scalar_as<std::string>(n, f, "a string");
}

void decode(const YAML::Node& n, const std::string& f, std::uint64_t& out) {
  const auto v = scalar_as<long long>(n, f, "a non-negative integer");
  if (v < 0) bad_value(n, f, "a non-negative integer");
  out = static_cast<std::uint64_t>(v);
}

static_assert(std::is_same_v<std::size_t, std::uint64_t>);

void decode(const YAML::Node& n, const std::string& f, WeightTriple& out);

template <typename T>
void decode(const YAML::Node& n, const std::string& f, std::vector<T>& out) {
  if (!n.IsSequence()) bad_value(n, f, "a list");
  out.clear();
  for (std::size_t i = 0; i < n.size(); ++i) {
    T item{};
    decode(n[i], f + "[" + std::to_string(i) + "]", item);
    out.push_back(std::move(item));
  }
}

void decode(const YAML::Node& n, const std::string& f, WeightTriple& out) {
  if (!n.IsSequence() || n.size() != 3) bad_value(n, f, "a list of three weights");
  for (std::size_t i = 0; i < 3; ++i) decode(n[i], f, out[i]);
}

void decode(const YAML::Node& n, const std::string& f, hhcl::LossMode& out) {
  std::string s;
  decode(n, f, s);
  try {
    out = hhcl::parse_loss_mode(s);
  } catch (const ConfigError& e) {
    throw ConfigError(where(n) + "field '" + f + "': " + e.what());
  }
}

void decode(const YAML::Node& n, const std::string& f, hhcl::ContrastLevels& out) {
  std::string s;
  decode(n, f, s);
  try {
    out = hhcl::parse_contrast_levels(s);
  } catch (const ConfigError& e) {
    throw ConfigError(where(n) + "field '" + f + "': " + e.what());
  }
}

// Reads the keys of one mapping and rejects anything it was not asked for.
class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(where(node_) + "section '" + name_ + "' must be a mapping");
    }
  }

  template <typename T>
  Section& field(const char* key, T& out) {
    known_.insert(key);
    if (!node_ || node_.IsNull()) return *this;
    const YAML::Node value = node_[key];
    if (value) decode(value, name_ + "." + key, out);
    return *this;
  }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!known_.count(key)) {
        throw ConfigError(where(kv.first) + "unknown key '" + name_ + "." + key + "'");
      }
    }
  }

 private:
  const YAML::Node node_;
  std::string name_;
  std::set<std::string> known_;
};

ExperimentConfig decode_root(const YAML::Node& root) {
  ExperimentConfig c;
  if (!root || root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError(where(root) + "configuration must be a mapping of sections");
  static const std::set<std::string> sections{"model", "loss", "data", "train", "output", "ablation"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!sections.count(key)) throw ConfigError(where(kv.first) + "unknown section '" + key + "'");
  }
  const YAML::Node& r = root;

  auto& m = c.model;
  Section model(r["model"], "model");
  model.field("stages", m.stages)
      .field("widths", m.widths)
      .field("heads", m.heads)
      .field("num_hyperedges", m.num_hyperedges)
      .field("key_dim", m.key_dim)
      .field("fusion_ratios", m.fusion_ratios)
      .field("normalize_hyperedges", m.normalize_hyperedges)
      .field("contrast_levels", m.contrast_levels)
      .field("saam", m.saam)
      .field("gate_closed", m.gate_closed)
      .finish();

  auto& l = c.loss;
  Section loss(r["loss"], "loss");
  loss.field("mode", l.mode)
      .field("alpha", l.alpha)
      .field("lambda", l.lambda)
      .field("tau", l.tau)
      .field("beta", l.beta)
      .field("w_hcon", l.w_hcon)
      .field("w_econ", l.w_econ)
      .field("w_hpop", l.w_hpop)
      .field("curvature", l.curvature)
      .finish();

  auto& d = c.data;
  Section data(r["data"], "data");
  data.field("num_coarse", d.num_coarse)
      .field("fine_per_coarse", d.fine_per_coarse)
      .field("grid", d.grid)
      .field("token_dim", d.token_dim)
      .field("signal_patch_size", d.signal_patch_size)
      .field("noise_std", d.noise_std)
      .field("coarse_amplitude", d.coarse_amplitude)
      .field("patch_amplitude", d.patch_amplitude)
      .field("samples_per_class", d.samples_per_class)
      .field("test_samples_per_class", d.test_samples_per_class)
      .finish();

  auto& t = c.train;
  Section train(r["train"], "train");
  train.field("epochs", t.epochs)
      .field("batch_size", t.batch_size)
      .field("learning_rate", t.learning_rate)
      .field("momentum", t.momentum)
      .field("grad_clip", t.grad_clip)
      .field("seed", t.seed)
      .field("snapshot_samples", t.snapshot_samples)
      .finish();

  Section output(r["output"], "output");
  output.field("directory", c.output.directory).finish();

  auto& a = c.ablation;
  Section ablation(r["ablation"], "ablation");
  ablation.field("components", a.components)
      .field("loss_weights", a.loss_weights)
      .field("seeds", a.seeds)
      .finish();
  return c;
}

YAML::Node load_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": malformed YAML: " + e.msg);
  }
}

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size() ||
      path.find('.', dot + 1) != std::string::npos) {
    throw ConfigError("override key '" + path + "' must be section.key");
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
  YAML::Node sec = root[section];
  if (!sec || sec.IsNull()) {
    root[section] = YAML::Node(YAML::NodeType::Map);
    sec = root[section];
  }
  sec[key] = load_yaml(value);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read configuration file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

hhcl::LossWeights LossConfig::weights() const {
  return {alpha, lambda, tau, beta, w_hcon, w_econ, w_hpop, curvature};
}

ExperimentConfig ExperimentConfig::toy_defaults() {
  ExperimentConfig c;
  c.model.num_hyperedges = 8;
  c.model.fusion_ratios = {8, 4, 1};
  c.data.patch_amplitude = 3.0;
  c.train.learning_rate = 0.1;
  return c;
}

harness::SyntheticSpec ExperimentConfig::synthetic_spec() const {
  harness::SyntheticSpec s;
  s.num_coarse = data.num_coarse;
  s.fine_per_coarse = data.fine_per_coarse;
  s.grid = data.grid;
  s.token_dim = data.token_dim;
  s.signal_patch_size = data.signal_patch_size;
  s.noise_std = data.noise_std;
  s.coarse_amplitude = data.coarse_amplitude;
  s.patch_amplitude = data.patch_amplitude;
  s.samples_per_class = data.samples_per_class;
  s.test_samples_per_class = data.test_samples_per_class;
  s.seed = derive_seed(train.seed, "data");
  return s;
}

void ExperimentConfig::validate() const {
  if (model.stages != model.widths.size()) {
    throw ConfigError("model.stages is " + std::to_string(model.stages) + " but model.widths lists " +
                      std::to_string(model.widths.size()) + " stages");
  }
  harness::BackboneShape bb{data.grid, data.token_dim, model.widths, model.heads};
  bb.validate();
  const std::size_t tokens = bb.tokens(bb.stages() - 1);
  saam::SaamShape shape{model.widths, tokens, model.num_hyperedges, model.key_dim};
  shape.validate();
  hhcl::validate_fusion_ratios(model.fusion_ratios, model.num_hyperedges);
  if (!model.saam && tokens % model.num_hyperedges != 0) {
    throw ConfigError("without SAAM the " + std::to_string(tokens) +
                      " final tokens must split evenly into " +
                      std::to_string(model.num_hyperedges) + " fixed regions");
  }
  loss.weights().validate();
  synthetic_spec().validate();
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (loss.alpha > 0.0 && train.batch_size < 2) {
    throw ConfigError("train.batch_size must be at least 2 when the contrastive loss is active");
  }
  if (!(train.learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be non-negative");
  if (!(train.momentum >= 0.0 && train.momentum < 1.0)) {
    throw ConfigError("train.momentum must lie in [0, 1)");
  }
  if (!(train.grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be non-negative");
  if (ablation.seeds == 0) throw ConfigError("ablation.seeds must be at least 1");
  if (output.directory.empty()) throw ConfigError("output.directory must not be empty");
}

std::vector<std::string> ExperimentConfig::overrides_from_defaults() const {
  const ExperimentConfig d;
  std::vector<std::string> out;
  auto check = [&](bool differs, const char* key) {
    if (differs) out.emplace_back(key);
  };
  check(model.stages != d.model.stages, "model.stages");
  check(model.widths != d.model.widths, "model.widths");
  check(model.heads != d.model.heads, "model.heads");
  check(model.num_hyperedges != d.model.num_hyperedges, "model.num_hyperedges");
  check(model.key_dim != d.model.key_dim, "model.key_dim");
  check(model.fusion_ratios != d.model.fusion_ratios, "model.fusion_ratios");
  check(model.normalize_hyperedges != d.model.normalize_hyperedges, "model.normalize_hyperedges");
  check(model.contrast_levels != d.model.contrast_levels, "model.contrast_levels");
  check(model.saam != d.model.saam, "model.saam");
  check(model.gate_closed != d.model.gate_closed, "model.gate_closed");
  check(loss.mode != d.loss.mode, "loss.mode");
  check(loss.alpha != d.loss.alpha, "loss.alpha");
  check(loss.lambda != d.loss.lambda, "loss.lambda");
  check(loss.tau != d.loss.tau, "loss.tau");
  check(loss.beta != d.loss.beta, "loss.beta");
  check(loss.w_hcon != d.loss.w_hcon, "loss.w_hcon");
  check(loss.w_econ != d.loss.w_econ, "loss.w_econ");
  check(loss.w_hpop != d.loss.w_hpop, "loss.w_hpop");
  check(loss.curvature != d.loss.curvature, "loss.curvature");
  return out;
}

ExperimentConfig parse_config(const std::string& text) { return parse_config(text, {}); }

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  YAML::Node root = load_yaml(text);
  for (const auto& o : overrides) apply_override(root, o);
  ExperimentConfig c = decode_root(root);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return load_config(path, {}); }

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  try {
    return parse_config(read_file(path), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_yaml(const ExperimentConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  auto seq = [&](const auto& values) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& v : values) out << v;
    out << YAML::EndSeq;
  };

  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "stages" << YAML::Value << c.model.stages;
  out << YAML::Key << "widths" << YAML::Value;
  seq(c.model.widths);
  out << YAML::Key << "heads" << YAML::Value;
  seq(c.model.heads);
  out << YAML::Key << "num_hyperedges" << YAML::Value << c.model.num_hyperedges;
  out << YAML::Key << "key_dim" << YAML::Value << c.model.key_dim;
  out << YAML::Key << "fusion_ratios" << YAML::Value;
  seq(c.model.fusion_ratios);
  out << YAML::Key << "normalize_hyperedges" << YAML::Value << c.model.normalize_hyperedges;
  out << YAML::Key << "contrast_levels" << YAML::Value << hhcl::to_string(c.model.contrast_levels);
  out << YAML::Key << "saam" << YAML::Value << c.model.saam;
  out << YAML::Key << "gate_closed" << YAML::Value << c.model.gate_closed;
  out << YAML::EndMap;

  out << YAML::Key << "loss" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << hhcl::to_string(c.loss.mode);
  out << YAML::Key << "alpha" << YAML::Value << c.loss.alpha;
  out << YAML::Key << "lambda" << YAML::Value << c.loss.lambda;
  out << YAML::Key << "tau" << YAML::Value << c.loss.tau;
  out << YAML::Key << "beta" << YAML::Value << c.loss.beta;
  out << YAML::Key << "w_hcon" << YAML::Value << c.loss.w_hcon;
  out << YAML::Key << "w_econ" << YAML::Value << c.loss.w_econ;
  out << YAML::Key << "w_hpop" << YAML::Value << c.loss.w_hpop;
  out << YAML::Key << "curvature" << YAML::Value << c.loss.curvature;
  out << YAML::EndMap;

  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "num_coarse" << YAML::Value << c.data.num_coarse;
  out << YAML::Key << "fine_per_coarse" << YAML::Value << c.data.fine_per_coarse;
  out << YAML::Key << "grid" << YAML::Value << c.data.grid;
  out << YAML::Key << "token_dim" << YAML::Value << c.data.token_dim;
  out << YAML::Key << "signal_patch_size" << YAML::Value << c.data.signal_patch_size;
  out << YAML::Key << "noise_std" << YAML::Value << c.data.noise_std;
  out << YAML::Key << "coarse_amplitude" << YAML::Value << c.data.coarse_amplitude;
  out << YAML::Key << "patch_amplitude" << YAML::Value << c.data.patch_amplitude;
  out << YAML::Key << "samples_per_class" << YAML::Value << c.data.samples_per_class;
  out << YAML::Key << "test_samples_per_class" << YAML::Value << c.data.test_samples_per_class;
  out << YAML::EndMap;

  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << c.train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << c.train.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << c.train.learning_rate;
  out << YAML::Key << "momentum" << YAML::Value << c.train.momentum;
  out << YAML::Key << "grad_clip" << YAML::Value << c.train.grad_clip;
  out << YAML::Key << "seed" << YAML::Value << c.train.seed;
  out << YAML::Key << "snapshot_samples" << YAML::Value << c.train.snapshot_samples;
  out << YAML::EndMap;

  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "directory" << YAML::Value << c.output.directory;
  out << YAML::EndMap;

  out << YAML::Key << "ablation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "components" << YAML::Value << c.ablation.components;
  out << YAML::Key << "loss_weights" << YAML::Value << YAML::BeginSeq;
  for (const auto& w : c.ablation.loss_weights) seq(w);
  out << YAML::EndSeq;
  out << YAML::Key << "seeds" << YAML::Value << c.ablation.seeds;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace hgcl
