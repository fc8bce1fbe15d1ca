#include "hgcl/harness/backbone.hpp"

#include <cmath>
#include <string>

#include "hgcl/errors.hpp"
#include "hgcl/init.hpp"
#include "hgcl/ops.hpp"

namespace hgcl::harness {

void BackboneShape::validate() const {
  if (widths.empty()) throw ConfigError("backbone needs at least one stage");
  if (heads.size() != widths.size()) {
    throw ConfigError("model.heads must list one head count per stage");
  }
  for (std::size_t s = 0; s < widths.size(); ++s) {
    if (heads[s] == 0 || widths[s] % heads[s] != 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + " width " + std::to_string(widths[s]) +
                        " is not divisible by its head count");
    }
  }
  if (grid == 0 || input_dim == 0) throw ConfigError("backbone grid and input width must be positive");
  const std::size_t factor = std::size_t{1} << (widths.size() - 1);
  if (grid % factor != 0) {
    throw ConfigError("grid " + std::to_string(grid) + " cannot be halved " +
                      std::to_string(widths.size() - 1) + " times");
  }
}

BackboneParams init_backbone(const BackboneShape& shape, std::mt19937_64& rng) {
  shape.validate();
  BackboneParams p;
  std::size_t in = shape.input_dim;
  for (std::size_t s = 0; s < shape.stages(); ++s) {
    const std::size_t c = shape.widths[s], dh = c / shape.heads[s];
    StageParams<Tensor> sp;
    sp.embed_w = xavier_uniform(in, c, rng);
    sp.embed_b = Tensor({1, c});
    for (std::size_t h = 0; h < shape.heads[s]; ++h) {
      sp.w_query.push_back(xavier_uniform(c, dh, rng));
      sp.w_key.push_back(xavier_uniform(c, dh, rng));
      sp.w_value.push_back(xavier_uniform(c, dh, rng));
    }
    p.stages.push_back(std::move(sp));
    in = c;
  }
  return p;
}

BackboneVars bind(Tape& tape, const BackboneParams& params, bool trainable) {
  auto lift = [&](const Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); };
  BackboneVars v;
  for (const auto& s : params.stages) {
    StageParams<Var> sv;
    sv.embed_w = lift(s.embed_w);
    sv.embed_b = lift(s.embed_b);
    for (const auto& w : s.w_query) sv.w_query.push_back(lift(w));
    for (const auto& w : s.w_key) sv.w_key.push_back(lift(w));
    for (const auto& w : s.w_value) sv.w_value.push_back(lift(w));
    v.stages.push_back(std::move(sv));
  }
  return v;
}

Tensor downsample_matrix(std::size_t side) {
  const std::size_t half = side / 2;
  Tensor m({half * half, side * side});
  for (std::size_t r = 0; r < half; ++r)
    for (std::size_t c = 0; c < half; ++c)
      for (std::size_t dr = 0; dr < 2; ++dr)
        for (std::size_t dc = 0; dc < 2; ++dc)
          m(r * half + c, (2 * r + dr) * side + (2 * c + dc)) = 0.25;
  return m;
}

saam::StageFeatures backbone_forward(const BackboneShape& shape, const BackboneVars& params,
                                     Var tokens) {
  if (tokens.value().rows() != shape.tokens(0) || tokens.value().cols() != shape.input_dim) {
    throw DimensionError("backbone_forward: input " + shape_string(tokens.shape()) +
                         " does not match a " + std::to_string(shape.grid) + "x" +
                         std::to_string(shape.grid) + " grid of width " +
                         std::to_string(shape.input_dim));
  }
  saam::StageFeatures out;
  Var input = tokens;
  for (std::size_t s = 0; s < shape.stages(); ++s) {
    if (s > 0) {
      input = ops::avg_pool_2x2(input, shape.side(s - 1));
    }
    const auto& sp = params.stages[s];
    Var embed = ops::relu(ops::add_rowvec(ops::matmul(input, sp.embed_w), sp.embed_b));
    const std::size_t dh = shape.widths[s] / shape.heads[s];
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> head_out, maps;
    for (std::size_t h = 0; h < shape.heads[s]; ++h) {
      Var q = ops::matmul(embed, sp.w_query[h]);
      Var k = ops::matmul(embed, sp.w_key[h]);
      Var v = ops::matmul(embed, sp.w_value[h]);
      Var attn = ops::attention_weights(q, k, inv_sqrt);
      head_out.push_back(ops::matmul(attn, v));
      maps.push_back(attn);
    }
    Var mixed = head_out.size() == 1 ? head_out.front() : ops::concat_cols(head_out);
    Var x = ops::add(embed, mixed);
    out.tokens.push_back(x);
    out.attention.push_back(std::move(maps));
    input = x;
  }
  return out;
}

}  // namespace hgcl::harness
