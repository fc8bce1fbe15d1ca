#include "hgcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hgcl/errors.hpp"

namespace hgcl {
namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  const double v = f(tape, tape.constant(x)).item();
  if (!std::isfinite(v)) throw NumericalError("gradient_check: f is not finite");
  return v;
}

}  // namespace

GradientCheckResult gradient_check_detailed(const ScalarFn& f, const Tensor& x, double h) {
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    if (!std::isfinite(y.item())) throw NumericalError("gradient_check: f is not finite");
    tape.backward(y);
    analytic = tape.grad(xv);
  }

  GradientCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe);
    probe[i] = orig - h;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (!std::isfinite(analytic[i])) {
      throw NumericalError("gradient_check: analytic gradient not finite at index " +
                           std::to_string(i));
    }
    if (err > result.max_rel_error || i == 0) {
      result = GradientCheckResult{std::max(err, result.max_rel_error), i, analytic[i], numeric};
    }
  }
  return result;
}

double gradient_check(const ScalarFn& f, const Tensor& x, double h) {
  return gradient_check_detailed(f, x, h).max_rel_error;
}

}  // namespace hgcl
