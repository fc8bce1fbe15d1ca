#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hgcl/errors.hpp"
#include "hgcl/gradcheck.hpp"
#include "hgcl/lorentz.hpp"
#include "hgcl/ops.hpp"

using namespace hgcl;
using namespace hgcl::lorentz;

namespace {

std::vector<double> random_preimage(std::mt19937_64& rng, std::size_t dim, double max_norm) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.0, max_norm);
  std::vector<double> z(dim);
  double norm = 0.0;
  for (double& v : z) {
    v = n(rng);
    norm += v * v;
  }
  const double target = r(rng);
  for (double& v : z) v *= target / std::sqrt(norm);
  return z;
}

}  // namespace

TEST(LorentzInner, HandValues) {
  const std::vector<double> o{1, 0, 0}, e1{0, 1, 0}, p{2, 1, std::sqrt(2.0)};
  EXPECT_DOUBLE_EQ(lorentz_inner(o, o), -1.0);
  EXPECT_DOUBLE_EQ(lorentz_inner(o, e1), 0.0);
  EXPECT_NEAR(lorentz_inner(p, p), -4.0 + 1.0 + 2.0, 1e-15);
}

TEST(ExpMapOrigin, OriginAtUnitAndTenthCurvature) {
  const std::vector<double> zero{0, 0, 0};
  const auto unit = exp_map_origin(zero, 1.0);
  EXPECT_DOUBLE_EQ(unit.time(), 1.0);
  for (double v : unit.space()) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(exp_map_origin(zero, 0.1).time(), std::sqrt(10.0), 1e-15);
  EXPECT_NEAR(exp_map_origin(zero, 0.1).time(), 3.16227766, 1e-8);
}

TEST(ExpMapOrigin, KnownPoint) {
  const std::vector<double> z{std::sqrt(3.0), 0};
  const auto x = exp_map_origin(z, 1.0);
  EXPECT_NEAR(x.time(), 2.0, 1e-15);
  EXPECT_NEAR(x.space()[0], std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(lorentz_inner(x.coords(), x.coords()), -1.0, 1e-14);
}

TEST(ExpMapOrigin, OutputsLieOnHyperboloid) {
  std::mt19937_64 rng(42);
  for (double k : {0.05, 0.1, 0.5, 1.0}) {
    for (int i = 0; i < 1000; ++i) {
      const auto x = exp_map_origin(random_preimage(rng, 4, 10.0), k);
      const double lhs = lorentz_inner(x.coords(), x.coords());
      EXPECT_NEAR(lhs, -1.0 / k, 1e-9 * std::max(1.0, x.time() * x.time()));
      EXPECT_GT(x.time(), 0.0);
    }
  }
}

TEST(LorentzDistance, SelfDistanceSitsAtClampFloor) {
  // The clamp keeps the arcosh argument at 1 + 1e-7 or above, so d(x, x) sits
  // at the floor value instead of exactly 0.
  const auto o = exp_map_origin(std::vector<double>{0, 0}, 1.0);
  EXPECT_NEAR(lorentz_distance(o, o), std::acosh(kDistanceClampFloor), 1e-15);
  EXPECT_DOUBLE_EQ(lorentz_distance(o, o, 1.0), 0.0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto x = exp_map_origin(random_preimage(rng, 3, 10.0), 0.1);
    EXPECT_LE(lorentz_distance(x, x), std::acosh(kDistanceClampFloor) / std::sqrt(0.1) + 1e-12);
  }
}

TEST(LorentzDistance, KnownValue) {
  const auto x = exp_map_origin(std::vector<double>{std::sqrt(3.0), 0}, 1.0);
  const auto o = exp_map_origin(std::vector<double>{0, 0}, 1.0);
  EXPECT_NEAR(lorentz_distance(x, o), 1.3169579, 1e-7);
  EXPECT_NEAR(lorentz_distance(x, o), std::acosh(2.0), 1e-14);
}

TEST(LorentzDistance, SymmetricAndNonnegative) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const auto x = exp_map_origin(random_preimage(rng, 3, 10.0), 0.5);
    const auto y = exp_map_origin(random_preimage(rng, 3, 10.0), 0.5);
    EXPECT_EQ(lorentz_distance(x, y), lorentz_distance(y, x));
    EXPECT_GE(lorentz_distance(x, y), 0.0);
  }
}

TEST(LorentzDistance, SampledTriangleInequality) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto x = exp_map_origin(random_preimage(rng, 3, 5.0), 1.0);
    const auto y = exp_map_origin(random_preimage(rng, 3, 5.0), 1.0);
    const auto z = exp_map_origin(random_preimage(rng, 3, 5.0), 1.0);
    EXPECT_LE(lorentz_distance(x, z), lorentz_distance(x, y) + lorentz_distance(y, z) + 1e-8);
  }
}

TEST(LorentzDistance, IncreasesAlongRay) {
  const std::vector<double> u{0.6, 0.8};
  const auto o = exp_map_origin(std::vector<double>{0, 0}, 1.0);
  double prev = 0.0;
  for (int step = 1; step <= 100; ++step) {
    const double t = 0.1 * step;
    const auto x = exp_map_origin(std::vector<double>{t * u[0], t * u[1]}, 1.0);
    const double d = lorentz_distance(o, x);
    EXPECT_GT(d, prev);
    // The lift keeps the pre-image as spatial part, so d = asinh(|z|) at K = 1.
    EXPECT_NEAR(d, std::asinh(t), 1e-9 * std::max(1.0, t));
    prev = d;
  }
}

TEST(LorentzDistance, CurvatureScaling) {
  // d_K(o, exp0(z)) = asinh(sqrt(K) |z|) / sqrt(K).
  for (double k : {0.05, 0.1, 0.5, 1.0}) {
    const std::vector<double> z{1.5, -2.0};
    const auto x = exp_map_origin(z, k);
    const auto o = exp_map_origin(std::vector<double>{0, 0}, k);
    EXPECT_NEAR(lorentz_distance(o, x), std::asinh(std::sqrt(k) * 2.5) / std::sqrt(k), 1e-12);
  }
}

TEST(Project, KnownPointAndUpperSheet) {
  const auto p = project_to_hyperboloid(std::vector<double>{0, 3, 4}, 1.0);
  EXPECT_NEAR(p.time(), std::sqrt(26.0), 1e-15);
  EXPECT_EQ(p.space()[0], 3.0);
  EXPECT_EQ(p.space()[1], 4.0);
  const auto q = project_to_hyperboloid(std::vector<double>{-5, 0, 0}, 1.0);
  EXPECT_EQ(q.time(), 1.0);
}

TEST(Project, ValidPointUnchanged) {
  const auto x = exp_map_origin(std::vector<double>{0.3, -1.2, 2.0}, 0.1);
  const std::vector<double> coords(x.coords().begin(), x.coords().end());
  const auto p = project_to_hyperboloid(coords, 0.1);
  for (std::size_t i = 0; i < coords.size(); ++i) EXPECT_NEAR(p.coords()[i], coords[i], 1e-12);
}

TEST(Curvature, NonPositiveRejected) {
  EXPECT_THROW(exp_map_origin(std::vector<double>{1.0}, 0.0), ParameterError);
  EXPECT_THROW(exp_map_origin(std::vector<double>{1.0}, -1.0), ParameterError);
}

TEST(LorentzTape, MatchesScalarImplementation) {
  std::mt19937_64 rng(5);
  Tensor z({6, 3});
  for (std::size_t i = 0; i < 6; ++i) {
    const auto v = random_preimage(rng, 3, 4.0);
    for (std::size_t j = 0; j < 3; ++j) z(i, j) = v[j];
  }
  Tape t;
  const Tensor d = pairwise_lorentz_distance(exp_map_origin(t.constant(z), 0.1), 0.1).value();
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const auto xi = exp_map_origin(z.row(i), 0.1), xj = exp_map_origin(z.row(j), 0.1);
      EXPECT_NEAR(d(i, j), lorentz_distance(xi, xj), 1e-12);
    }
  }
}

TEST(LorentzTape, DistanceGradientPasses) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor other({3, 2});
  for (double& v : other.data()) v = n(rng);
  Tensor x = other;
  for (double& v : x.data()) v += 0.01 + 0.5 * n(rng) * n(rng);
  const double err = gradient_check(
      [&](Tape& t, Var v) {
        const Var a = exp_map_origin(v, 0.1);
        const Var b = exp_map_origin(t.constant(other), 0.1);
        return ops::sum(lorentz_distance_rows(a, b, 0.1));
      },
      x);
  EXPECT_LT(err, 1e-4);
}
