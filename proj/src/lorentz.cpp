#include "hgcl/lorentz.hpp"

#include <cmath>
#include <string>

#include "hgcl/errors.hpp"
#include "hgcl/serialize.hpp"

namespace hgcl::lorentz {

void require_positive_curvature(double curvature) {
  if (!(curvature > 0.0) || !std::isfinite(curvature)) {
    throw ParameterError("curvature must be positive and finite, got " + std::to_string(curvature));
  }
}

LorentzPoint::LorentzPoint(std::vector<double> coords, double curvature)
    : coords_(std::move(coords)), curvature_(curvature) {
  require_positive_curvature(curvature_);
  if (coords_.size() < 2) throw DimensionError("Lorentz point needs at least 2 coordinates");
}

double lorentz_inner(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionError("lorentz_inner: dimensions " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " (need equal, >= 2)");
  }
  double s = -x[0] * y[0];
  for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

LorentzPoint exp_map_origin(std::span<const double> z, double curvature) {
  require_positive_curvature(curvature);
  std::vector<double> coords(z.size() + 1);
  double sq = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    coords[i + 1] = z[i];
    sq += z[i] * z[i];
  }
  coords[0] = std::sqrt(1.0 / curvature + sq);
  return LorentzPoint(std::move(coords), curvature);
}

double lorentz_distance(const LorentzPoint& x, const LorentzPoint& y, double clamp_floor) {
  if (x.curvature() != y.curvature()) {
    throw ParameterError("lorentz_distance: curvature mismatch " + std::to_string(x.curvature()) +
                         " vs " + std::to_string(y.curvature()));
  }
  const double k = x.curvature();
  const double arg = std::max(-k * lorentz_inner(x.coords(), y.coords()), clamp_floor);
  if (!(arg >= 1.0)) {
    throw DomainError("lorentz_distance: arcosh argument " + format_double(arg) + " below 1");
  }
  return std::acosh(arg) / std::sqrt(k);
}

LorentzPoint project_to_hyperboloid(std::span<const double> v, double curvature) {
  if (v.size() < 2) throw DimensionError("project_to_hyperboloid: need at least 2 coordinates");
  return exp_map_origin(v.subspan(1), curvature);
}

Var exp_map_origin(Var z, double curvature) {
  require_positive_curvature(curvature);
  Var sq = ops::sum_axis(ops::square(z), 1);
  Var time = ops::sqrt(ops::add_scalar(sq, 1.0 / curvature));
  return ops::concat_cols({time, z});
}

Var lorentz_inner_rows(Var x, Var y) {
  require_same_shape(x.shape(), y.shape(), "lorentz_inner_rows");
  const std::size_t dim = x.value().cols();
  if (dim < 2) throw DimensionError("lorentz_inner_rows: need at least 2 columns");
  Var time = ops::mul(ops::slice_cols(x, 0, 1), ops::slice_cols(y, 0, 1));
  Var space = ops::sum_axis(ops::mul(ops::slice_cols(x, 1, dim), ops::slice_cols(y, 1, dim)), 1);
  return ops::sub(space, time);
}

Var lorentz_distance_rows(Var x, Var y, double curvature, double clamp_floor) {
  require_positive_curvature(curvature);
  Var arg = ops::scale(lorentz_inner_rows(x, y), -curvature);
  return ops::scale(ops::arcosh(ops::clamp_min(arg, clamp_floor)), 1.0 / std::sqrt(curvature));
}

Var pairwise_lorentz_distance(Var x, double curvature, double clamp_floor) {
  require_positive_curvature(curvature);
  const std::size_t dim = x.value().cols();
  if (dim < 2) throw DimensionError("pairwise_lorentz_distance: need at least 2 columns");
  Var time = ops::slice_cols(x, 0, 1);
  Var space = ops::slice_cols(x, 1, dim);
  // <x_i, x_j>_L = -t_i t_j + s_i . s_j
  Var gram = ops::sub(ops::matmul(space, ops::transpose(space)),
                      ops::matmul(time, ops::transpose(time)));
  Var arg = ops::scale(gram, -curvature);
  return ops::scale(ops::arcosh(ops::clamp_min(arg, clamp_floor)), 1.0 / std::sqrt(curvature));
}

}  // namespace hgcl::lorentz
