#pragma once

#include <span>
#include <vector>

#include "hgcl/ops.hpp"
#include "hgcl/tape.hpp"

// Lorentz (hyperboloid) model of hyperbolic space with curvature K > 0:
//   L^d_K = { x in R^{d+1} : <x, x>_L = -1/K, x_0 > 0 }
//   <x, y>_L = -x_0 y_0 + <x_s, y_s>
//   exp_0(z) = (sqrt(1/K + |z|^2), z)
//   d(x, y) = arcosh(-K <x, y>_L) / sqrt(K)
// At K = 1 these are the unit-hyperboloid formulas.
namespace hgcl::lorentz {

/// Lower bound applied to the arcosh argument of every distance.
inline constexpr double kDistanceClampFloor = 1.0 + ops::kArcoshEpsilon;

class LorentzPoint {
 public:
  LorentzPoint(std::vector<double> coords, double curvature);

  std::span<const double> coords() const noexcept { return coords_; }
  double time() const noexcept { return coords_.front(); }
  std::span<const double> space() const noexcept {
    return std::span<const double>(coords_).subspan(1);
  }
  double curvature() const noexcept { return curvature_; }
  std::size_t ambient_dim() const noexcept { return coords_.size(); }

 private:
  std::vector<double> coords_;
  double curvature_;
};

double lorentz_inner(std::span<const double> x, std::span<const double> y);
LorentzPoint exp_map_origin(std::span<const double> z, double curvature);
double lorentz_distance(const LorentzPoint& x, const LorentzPoint& y,
                        double clamp_floor = kDistanceClampFloor);
/// Keep the space-like part and recompute x_0 so the point lies on the upper sheet.
LorentzPoint project_to_hyperboloid(std::span<const double> v, double curvature);

// Tape versions; every row of the input is one point.

/// n x d pre-images -> n x (d+1) hyperboloid points.
Var exp_map_origin(Var z, double curvature);
/// Row-wise Lorentzian inner product of two n x (d+1) matrices, n x 1.
Var lorentz_inner_rows(Var x, Var y);
/// Row-wise geodesic distance between matched points, n x 1.
Var lorentz_distance_rows(Var x, Var y, double curvature,
                          double clamp_floor = kDistanceClampFloor);
/// All-pairs geodesic distance between the rows of x, n x n.
Var pairwise_lorentz_distance(Var x, double curvature,
                              double clamp_floor = kDistanceClampFloor);

void require_positive_curvature(double curvature);

}  // namespace hgcl::lorentz
