#include "hgcl/harness/model.hpp"

#include <limits>

#include "hgcl/errors.hpp"
#include "hgcl/init.hpp"
#include "hgcl/ops.hpp"

namespace hgcl::harness {

Tensor region_partition(std::size_t tokens, std::size_t regions) {
  if (regions == 0 || tokens % regions != 0) {
    throw ConfigError(std::to_string(tokens) + " tokens do not split into " +
                      std::to_string(regions) + " equal regions");
  }
  const std::size_t block = tokens / regions;
  Tensor p({regions, tokens});
  for (std::size_t m = 0; m < regions; ++m)
    for (std::size_t j = 0; j < block; ++j) p(m, m * block + j) = 1.0 / static_cast<double>(block);
  return p;
}

std::size_t count_correct(const Tensor& logits, const std::vector<const Sample*>& batch) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    if (static_cast<int>(best) == batch[i]->label) ++correct;
  }
  return correct;
}

Model::Model(const ExperimentConfig& config) : config_(config) {
  config_.validate();
  const auto& m = config_.model;
  backbone_ = BackboneShape{config_.data.grid, config_.data.token_dim, m.widths, m.heads};
  saam_shape_ = saam::SaamShape{m.widths, final_tokens(), m.num_hyperedges, m.key_dim};

  // Independent streams keep the backbone and classifier initialization
  // unchanged whether or not SAAM is present.
  const std::uint64_t seed = config_.train.seed;
  std::mt19937_64 backbone_rng(derive_seed(seed, "init/backbone"));
  params_.backbone = init_backbone(backbone_, backbone_rng);
  if (m.saam) {
    std::mt19937_64 saam_rng(derive_seed(seed, "init/saam"));
    params_.saam = saam::init_saam(saam_shape_, saam_rng);
  } else {
    partition_ = region_partition(final_tokens(), m.num_hyperedges);
  }
  std::mt19937_64 head_rng(derive_seed(seed, "init/classifier"));
  const std::size_t width = m.widths.back(), classes = config_.synthetic_spec().num_classes();
  params_.classifier_w = xavier_uniform(width, classes, head_rng);
  params_.classifier_b = Tensor({1, classes});
}

Model::SampleOutput Model::forward_sample(Tape& tape, const BackboneVars& backbone,
                                          const saam::SaamVars* saam, const Sample& sample) const {
  const saam::StageFeatures stages =
      backbone_forward(backbone_, backbone, tape.constant(sample.tokens));
  SampleOutput out;
  if (saam != nullptr) {
    const auto s = saam::saam_forward(stages, *saam, {config_.model.normalize_hyperedges});
    out.refined = s.refined;
    out.leaves = s.hyperedges;
    out.incidence = s.incidence;
  } else {
    out.refined = stages.tokens.back();
    out.leaves = ops::matmul(tape.constant(partition_), out.refined);
  }
  return out;
}

BatchOutput Model::forward(Tape& tape, const std::vector<const Sample*>& batch,
                           bool trainable) const {
  if (batch.empty()) throw BatchError("forward: empty batch");
  BatchOutput out;
  BackboneVars backbone = bind(tape, params_.backbone, trainable);
  backbone.visit([&](Var v) { out.params.push_back(v); });
  saam::SaamVars saam_vars;
  const bool use_saam = config_.model.saam;
  if (use_saam) {
    saam_vars = saam::bind(tape, params_.saam, trainable);
    saam_vars.visit([&](Var v) { out.params.push_back(v); });
    if (config_.model.gate_closed) {
      // sigmoid(-inf) is exactly 0, so the refined tokens equal the backbone tokens.
      const Tensor& g = params_.saam.gate;
      saam_vars.gate = tape.constant(Tensor(g.shape(), -std::numeric_limits<double>::infinity()));
    }
  }
  auto lift = [&](const Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); };
  const Var w = lift(params_.classifier_w), b = lift(params_.classifier_b);
  out.params.push_back(w);
  out.params.push_back(b);

  const double alpha = config_.loss.alpha;
  std::vector<Var> pooled;
  std::vector<Var> leaves;
  std::vector<int> labels;
  for (const Sample* s : batch) {
    const SampleOutput so = forward_sample(tape, backbone, use_saam ? &saam_vars : nullptr, *s);
    pooled.push_back(ops::mean_axis(so.refined, 0));
    if (so.incidence.tape != nullptr) out.incidence.push_back(so.incidence);
    leaves.push_back(so.leaves);
    labels.push_back(s->label);
  }
  const Var features = pooled.size() == 1 ? pooled.front() : ops::concat_rows(pooled);
  out.logits = ops::add_rowvec(ops::matmul(features, w), b);
  out.ce = ops::cross_entropy(tape.constant(out.logits.value()), labels);

  if (alpha > 0.0 && trainable) {
    std::vector<hhcl::HierarchyVars> trees;
    for (const Var& leaf : leaves) {
      const auto structure = hhcl::build_hierarchy(leaf.value(), config_.model.fusion_ratios);
      trees.push_back(hhcl::hierarchy_vars(leaf, structure));
    }
    out.hhcl = hhcl::hhcl_total(trees, labels, config_.loss.weights(), config_.loss.mode,
                                config_.model.contrast_levels);
  } else {
    const Var zero = tape.constant(Tensor::scalar(0.0));
    out.hhcl = {zero, zero, zero, zero};
  }
  out.loss = hhcl::total_loss(out.logits, labels, out.hhcl.total, trainable ? alpha : 0.0);
  return out;
}

}  // namespace hgcl::harness
