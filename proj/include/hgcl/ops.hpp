#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hgcl/tape.hpp"
#include "hgcl/tensor.hpp"

// Differentiable operators over tape values. Matrices are rank-2 tensors;
// reductions keep two dimensions (axis 0 -> 1xC, axis 1 -> Nx1) except the
// full reductions `sum` and `mean`, which return rank-0 scalars.
namespace hgcl::ops {

// Linear algebra
Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise binary (identical shapes)
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// Restricted broadcasts
Var add_rowvec(Var x, Var row);   // NxC + 1xC
Var mul_colvec(Var x, Var col);   // NxC * Nx1, broadcast along channels
Var mul_scalar(Var x, Var s);     // any shape * single-element tensor

// Scalar constants
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var neg(Var x);

// Elementwise unary
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var square(Var x);
Var relu(Var x);  // relu'(0) = 0
Var sigmoid(Var x);

/// Floor used by callers before arcosh and inside its derivative guard.
inline constexpr double kArcoshEpsilon = 1e-7;

/// ln(x + sqrt(x^2 - 1)); throws DomainError for any entry below 1.
Var arcosh(Var x);
/// max(x, floor); the gradient is zero wherever the floor is active.
Var clamp_min(Var x, double floor);

// Reductions
Var sum(Var x);
Var mean(Var x);
Var sum_axis(Var x, int axis);
Var mean_axis(Var x, int axis);
/// Maximum along an axis; the gradient goes to the first maximal entry.
Var max_axis(Var x, int axis);

// Normalizations
/// Row-wise softmax with per-row max subtraction.
Var softmax_rows(Var x);
/// softmax_rows(q k^T * scale) recorded as a single node (N x N for N-row q, k).
Var attention_weights(Var q, Var k, double scale);
/// Per-row log-sum-exp over entries where mask != 0; rows with no entries give -inf.
Var logsumexp_rows_masked(Var x, const Tensor& mask);
/// x / sum(x).
Var normalize_sum(Var x);
/// Divide each column by its sum.
Var normalize_cols(Var x);

// Structure
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);
/// Rows of x are a side x side grid (row-major); average each 2x2 block.
/// Returns (side/2)^2 x C.
Var avg_pool_2x2(Var x, std::size_t side);

// Distances
/// Euclidean norm of each row (Nx1); zero subgradient for zero rows.
Var l2_norm_rows(Var x);
/// All-pairs Euclidean distances between rows (NxN); zero subgradient on coincident pairs.
Var pairwise_euclidean(Var x);

/// Mean cross-entropy of row logits against integer labels (log-sum-exp stabilized).
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace hgcl::ops
