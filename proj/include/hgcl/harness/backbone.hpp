#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "hgcl/saam.hpp"
#include "hgcl/tape.hpp"
#include "hgcl/tensor.hpp"

namespace hgcl::harness {

struct BackboneShape {
  std::size_t grid = 16;       // side of the stage-1 token grid
  std::size_t input_dim = 8;   // raw token width
  std::vector<std::size_t> widths{16, 32, 64};
  std::vector<std::size_t> heads{1, 2, 2};

  std::size_t stages() const { return widths.size(); }
  /// Grid side of stage s (0-based): grid / 2^s.
  std::size_t side(std::size_t stage) const { return grid >> stage; }
  std::size_t tokens(std::size_t stage) const { return side(stage) * side(stage); }
  void validate() const;
};

template <typename T>
struct StageParams {
  T embed_w, embed_b;
  std::vector<T> w_query, w_key, w_value;  // one C_s x (C_s / heads) map per head
};

template <typename T>
struct BackboneParamsT {
  std::vector<StageParams<T>> stages;

  template <typename F>
  void visit(F&& f) {
    for (auto& s : stages) {
      f(s.embed_w), f(s.embed_b);
      for (auto& w : s.w_query) f(w);
      for (auto& w : s.w_key) f(w);
      for (auto& w : s.w_value) f(w);
    }
  }
};

using BackboneParams = BackboneParamsT<Tensor>;
using BackboneVars = BackboneParamsT<Var>;

BackboneParams init_backbone(const BackboneShape& shape, std::mt19937_64& rng);
BackboneVars bind(Tape& tape, const BackboneParams& params, bool trainable);

/// Tiny multi-stage attention encoder.
///
/// Stage s: E = relu(T W_embed + b); X_s = E + concat_h softmax(Q_h K_h^T / sqrt(d_h)) V_h
/// with Q_h, K_h, V_h linear in E. Between stages the token grid is 2x2
/// average-pooled, so stage s has (grid / 2^s)^2 tokens.
saam::StageFeatures backbone_forward(const BackboneShape& shape, const BackboneVars& params,
                                     Var tokens);

/// Constant matrix averaging each 2x2 block of a side x side grid.
Tensor downsample_matrix(std::size_t side);

}  // namespace hgcl::harness
