#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "hgcl/tape.hpp"
#include "hgcl/tensor.hpp"

// Semantic-aware aggregation: multi-scale context -> hyperedge prototypes ->
// soft token/hyperedge incidence -> V->E->V message passing -> gated residual.
namespace hgcl::saam {

/// Per-stage backbone outputs. `attention[s]` holds one N_s x N_s map per
/// head; an empty vector marks a stage without attention maps.
struct StageFeatures {
  std::vector<Var> tokens;
  std::vector<std::vector<Var>> attention;
};

struct SaamShape {
  std::vector<std::size_t> stage_widths;  // C_s; the last one is the token width C
  std::size_t tokens = 0;                 // N, final-stage token count
  std::size_t hyperedges = 0;             // M
  std::size_t key_dim = 0;                // d_k

  std::size_t stages() const { return stage_widths.size(); }
  std::size_t width() const { return stage_widths.back(); }
  /// Length of one channel group of the flattened context, 3S*C / M.
  std::size_t group_size() const;
  /// Throws ConfigError if the shape is unusable (e.g. M does not divide 3S*C).
  void validate() const;
};

/// Linear maps C_s -> C for the three pooled contexts of one stage.
template <typename T>
struct ContextProjection {
  T avg_w, avg_b, max_w, max_b, attn_w, attn_b;
};

template <typename T>
struct SaamParamsT {
  std::vector<ContextProjection<T>> context;
  T phi_w1, phi_b1, phi_w2, phi_b2;  // shared two-layer map with ReLU, g -> d_k -> d_k
  T prototypes;                      // P, M x d_k
  T w_query;                         // C x d_k
  T w_edge;                          // C x C
  T w_vertex;                        // C x C
  T gate;                            // N x 1 gate logits

  template <typename F>
  void visit(F&& f) {
    for (auto& p : context) {
      f(p.avg_w), f(p.avg_b), f(p.max_w), f(p.max_b), f(p.attn_w), f(p.attn_b);
    }
    f(phi_w1), f(phi_b1), f(phi_w2), f(phi_b2), f(prototypes), f(w_query), f(w_edge),
        f(w_vertex), f(gate);
  }
};

using SaamParams = SaamParamsT<Tensor>;
using SaamVars = SaamParamsT<Var>;

/// Xavier-uniform weights, zero biases, N(0, 0.02) prototypes, zero gate logits.
SaamParams init_saam(const SaamShape& shape, std::mt19937_64& rng);

/// Record every parameter on the tape as a variable (trainable) or constant.
SaamVars bind(Tape& tape, const SaamParams& params, bool trainable);

struct SaamOptions {
  bool normalize_hyperedges = false;
};

/// Head-mean, then column-mean (attention received), renormalized to sum 1. Returns 1 x N.
Var importance_vector(const std::vector<Var>& heads);

struct ContextSet {
  Var features;                              // 3S x C, rows per stage: avg, max, attn
  std::vector<std::size_t> fallback_stages;  // stages whose attn row reused avg
};

ContextSet context_generate(const StageFeatures& stages,
                            const std::vector<ContextProjection<Var>>& projections);

/// K_m = phi(F_(m)) + P_m with F flattened row-major and split into M contiguous groups.
Var prototype_generate(Var context, const SaamVars& params);

/// A = softmax_m(X W_q K^T / sqrt(d_k)), N x M.
Var build_incidence(Var tokens, Var prototypes, Var w_query);

/// H_e = (A^T X) W_e; with `normalize` the columns of A are made stochastic first.
Var hyperedge_aggregate(Var incidence, Var tokens, Var w_edge, bool normalize = false);

/// X' = (A H_e) W_v.
Var node_update(Var incidence, Var hyperedges, Var w_vertex);

/// X + sigmoid(g) * X', gate broadcast along channels.
Var gated_residual(Var tokens, Var update, Var gate_logits);

struct SaamOutput {
  Var refined;     // N x C
  Var incidence;   // N x M
  Var hyperedges;  // M x C
  Var prototypes;  // M x d_k
  ContextSet context;
};

SaamOutput saam_forward(const StageFeatures& stages, const SaamVars& params,
                        const SaamOptions& options = {});

/// Max |row sum - 1| of an incidence matrix.
double incidence_row_error(const Tensor& incidence);

}  // namespace hgcl::saam
