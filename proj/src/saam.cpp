#include "hgcl/saam.hpp"

#include <cmath>
#include <string>

#include "hgcl/errors.hpp"
#include "hgcl/init.hpp"
#include "hgcl/ops.hpp"

namespace hgcl::saam {

std::size_t SaamShape::group_size() const {
  return 3 * stages() * width() / hyperedges;
}

void SaamShape::validate() const {
  if (stage_widths.empty()) throw ConfigError("SAAM needs at least one stage");
  for (std::size_t c : stage_widths)
    if (c == 0) throw ConfigError("SAAM stage width must be positive");
  if (tokens == 0) throw ConfigError("SAAM needs at least one token");
  if (hyperedges == 0) throw ConfigError("SAAM needs at least one hyperedge");
  if (key_dim == 0) throw ConfigError("SAAM key dimension must be positive");
  const std::size_t flat = 3 * stages() * width();
  if (flat % hyperedges != 0) {
    throw ConfigError("context of " + std::to_string(flat) + " channels cannot be split into " +
                      std::to_string(hyperedges) + " equal groups");
  }
}

SaamParams init_saam(const SaamShape& shape, std::mt19937_64& rng) {
  shape.validate();
  const std::size_t c = shape.width(), dk = shape.key_dim, m = shape.hyperedges;
  SaamParams p;
  for (std::size_t cs : shape.stage_widths) {
    p.context.push_back({xavier_uniform(cs, c, rng), Tensor({1, c}), xavier_uniform(cs, c, rng),
                         Tensor({1, c}), xavier_uniform(cs, c, rng), Tensor({1, c})});
  }
  p.phi_w1 = xavier_uniform(shape.group_size(), dk, rng);
  p.phi_b1 = Tensor({1, dk});
  p.phi_w2 = xavier_uniform(dk, dk, rng);
  p.phi_b2 = Tensor({1, dk});
  p.prototypes = normal_tensor({m, dk}, 0.02, rng);
  p.w_query = xavier_uniform(c, dk, rng);
  p.w_edge = xavier_uniform(c, c, rng);
  p.w_vertex = xavier_uniform(c, c, rng);
  p.gate = Tensor({shape.tokens, 1});
  return p;
}

SaamVars bind(Tape& tape, const SaamParams& params, bool trainable) {
  auto lift = [&](const Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); };
  SaamVars v;
  for (const auto& cp : params.context) {
    v.context.push_back({lift(cp.avg_w), lift(cp.avg_b), lift(cp.max_w), lift(cp.max_b),
                         lift(cp.attn_w), lift(cp.attn_b)});
  }
  v.phi_w1 = lift(params.phi_w1);
  v.phi_b1 = lift(params.phi_b1);
  v.phi_w2 = lift(params.phi_w2);
  v.phi_b2 = lift(params.phi_b2);
  v.prototypes = lift(params.prototypes);
  v.w_query = lift(params.w_query);
  v.w_edge = lift(params.w_edge);
  v.w_vertex = lift(params.w_vertex);
  v.gate = lift(params.gate);
  return v;
}

Var importance_vector(const std::vector<Var>& heads) {
  if (heads.empty()) throw ValidationError("importance_vector: no attention heads");
  for (const Var& h : heads) {
    const Tensor& a = h.value();
    require_matrix(a, "importance_vector");
    if (a.rows() != a.cols()) {
      throw DimensionError("importance_vector: attention map " + shape_string(a.shape()) +
                           " is not square");
    }
    require_same_shape(a.shape(), heads.front().shape(), "importance_vector");
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (double v : a.row(i)) s += v;
      if (std::abs(s - 1.0) > 1e-4) {
        throw ValidationError("importance_vector: attention row " + std::to_string(i) +
                              " sums to " + std::to_string(s));
      }
    }
  }
  // Column means of each head, then the head mean.
  Var acc = ops::mean_axis(heads.front(), 0);
  for (std::size_t h = 1; h < heads.size(); ++h) acc = ops::add(acc, ops::mean_axis(heads[h], 0));
  if (heads.size() > 1) acc = ops::scale(acc, 1.0 / static_cast<double>(heads.size()));
  return ops::normalize_sum(acc);
}

namespace {

Var project(Var pooled, Var w, Var b) { return ops::add_rowvec(ops::matmul(pooled, w), b); }

}  // namespace

ContextSet context_generate(const StageFeatures& stages,
                            const std::vector<ContextProjection<Var>>& projections) {
  if (stages.tokens.empty()) throw DimensionError("context_generate: no stages");
  if (projections.size() != stages.tokens.size()) {
    throw DimensionError("context_generate: " + std::to_string(projections.size()) +
                         " projections for " + std::to_string(stages.tokens.size()) + " stages");
  }
  ContextSet out;
  std::vector<Var> rows;
  rows.reserve(3 * stages.tokens.size());
  for (std::size_t s = 0; s < stages.tokens.size(); ++s) {
    const Var x = stages.tokens[s];
    const auto& proj = projections[s];
    Var avg = project(ops::mean_axis(x, 0), proj.avg_w, proj.avg_b);
    Var mx = project(ops::max_axis(x, 0), proj.max_w, proj.max_b);
    Var attn;
    const bool has_attention = s < stages.attention.size() && !stages.attention[s].empty();
    if (has_attention) {
      Var weights = importance_vector(stages.attention[s]);
      if (weights.value().cols() != x.value().rows()) {
        throw DimensionError("context_generate: attention map of stage " + std::to_string(s) +
                             " does not match its token count");
      }
      attn = project(ops::matmul(weights, x), proj.attn_w, proj.attn_b);
    } else {
      attn = avg;
      out.fallback_stages.push_back(s);
    }
    rows.push_back(avg);
    rows.push_back(mx);
    rows.push_back(attn);
  }
  out.features = ops::concat_rows(rows);
  return out;
}

Var prototype_generate(Var context, const SaamVars& params) {
  const Tensor& f = context.value();
  const std::size_t m = params.prototypes.value().rows();
  if (m == 0 || f.size() % m != 0) {
    throw ConfigError("prototype_generate: " + std::to_string(f.size()) +
                      " context channels cannot be split into " + std::to_string(m) + " groups");
  }
  const std::size_t g = f.size() / m;
  if (params.phi_w1.value().rows() != g) {
    throw ConfigError("prototype_generate: group size " + std::to_string(g) +
                      " does not match phi input width " +
                      std::to_string(params.phi_w1.value().rows()));
  }
  Var groups = ops::reshape(context, {m, g});
  Var hidden = ops::relu(ops::add_rowvec(ops::matmul(groups, params.phi_w1), params.phi_b1));
  Var phi = ops::add_rowvec(ops::matmul(hidden, params.phi_w2), params.phi_b2);
  return ops::add(phi, params.prototypes);
}

Var build_incidence(Var tokens, Var prototypes, Var w_query) {
  Var q = ops::matmul(tokens, w_query);
  const std::size_t dk = prototypes.value().cols();
  if (dk == 0) throw DimensionError("build_incidence: empty key dimension");
  return ops::attention_weights(q, prototypes, 1.0 / std::sqrt(static_cast<double>(dk)));
}

Var hyperedge_aggregate(Var incidence, Var tokens, Var w_edge, bool normalize) {
  Var a = normalize ? ops::normalize_cols(incidence) : incidence;
  return ops::matmul(ops::matmul(ops::transpose(a), tokens), w_edge);
}

Var node_update(Var incidence, Var hyperedges, Var w_vertex) {
  return ops::matmul(ops::matmul(incidence, hyperedges), w_vertex);
}

Var gated_residual(Var tokens, Var update, Var gate_logits) {
  require_same_shape(tokens.shape(), update.shape(), "gated_residual");
  return ops::add(tokens, ops::mul_colvec(update, ops::sigmoid(gate_logits)));
}

SaamOutput saam_forward(const StageFeatures& stages, const SaamVars& params,
                        const SaamOptions& options) {
  if (stages.tokens.empty()) throw DimensionError("saam_forward: no stages");
  SaamOutput out;
  out.context = context_generate(stages, params.context);
  out.prototypes = prototype_generate(out.context.features, params);
  const Var x = stages.tokens.back();
  out.incidence = build_incidence(x, out.prototypes, params.w_query);
  out.hyperedges =
      hyperedge_aggregate(out.incidence, x, params.w_edge, options.normalize_hyperedges);
  Var update = node_update(out.incidence, out.hyperedges, params.w_vertex);
  out.refined = gated_residual(x, update, params.gate);
  return out;
}

double incidence_row_error(const Tensor& incidence) {
  require_matrix(incidence, "incidence_row_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < incidence.rows(); ++i) {
    double s = 0.0;
    for (double v : incidence.row(i)) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace hgcl::saam
