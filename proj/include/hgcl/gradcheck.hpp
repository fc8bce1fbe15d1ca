#pragma once

#include <functional>

#include "hgcl/tape.hpp"
#include "hgcl/tensor.hpp"

namespace hgcl {

/// Scalar-valued function of one tensor, expressed on a tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compare the tape gradient of `f` at `x` against central differences.
///
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|); the
/// maximum over coordinates is reported. Throws NumericalError if `f` is not
/// finite at any evaluation point.
GradientCheckResult gradient_check_detailed(const ScalarFn& f, const Tensor& x, double h = 1e-5);

double gradient_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace hgcl
