#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hgcl/errors.hpp"
#include "hgcl/gradcheck.hpp"
#include "hgcl/ops.hpp"
#include "hgcl/saam.hpp"
#include "oracles.hpp"

using namespace hgcl;
using namespace hgcl::saam;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t({r, c});
  for (double& v : t.data()) v = n(rng);
  return t;
}

Tensor stochastic_rows(std::size_t n, std::mt19937_64& rng) {
  Tensor a = random_tensor(n, n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (a(i, j) = std::exp(a(i, j)));
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= s;
  }
  return a;
}

struct Fixture {
  SaamShape shape;
  SaamParams params;
  std::vector<Tensor> tokens;
  std::vector<std::vector<Tensor>> attention;
};

// Two stages (8 and 4 tokens), widths (2, 3), M = 3, d_k = 3.
Fixture make_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Fixture f;
  f.shape = SaamShape{{2, 3}, 4, 3, 3};
  f.params = init_saam(f.shape, rng);
  f.params.gate = random_tensor(4, 1, rng);
  f.params.prototypes = random_tensor(3, 3, rng);
  f.tokens = {random_tensor(8, 2, rng), random_tensor(4, 3, rng)};
  f.attention = {{stochastic_rows(8, rng)}, {stochastic_rows(4, rng), stochastic_rows(4, rng)}};
  return f;
}

StageFeatures bind_stages(Tape& t, const Fixture& f) {
  StageFeatures s;
  for (const auto& x : f.tokens) s.tokens.push_back(t.constant(x));
  for (const auto& heads : f.attention) {
    std::vector<Var> v;
    for (const auto& a : heads) v.push_back(t.constant(a));
    s.attention.push_back(v);
  }
  return s;
}

std::vector<oracle::Mat> mats(const std::vector<Tensor>& ts) {
  std::vector<oracle::Mat> out;
  for (const auto& t : ts) out.push_back(oracle::from_tensor(t));
  return out;
}

std::vector<std::vector<oracle::Mat>> mats(const std::vector<std::vector<Tensor>>& ts) {
  std::vector<std::vector<oracle::Mat>> out;
  for (const auto& heads : ts) out.push_back(mats(heads));
  return out;
}

}  // namespace

TEST(ImportanceVector, UniformAttention) {
  Tape t;
  const Var w = importance_vector({t.constant(Tensor({4, 4}, 0.25))});
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(w.value()[j], 0.25);
}

TEST(ImportanceVector, AllRowsOnFirstToken) {
  Tape t;
  const Var w = importance_vector({t.constant(Tensor::matrix({{1, 0}, {1, 0}}))});
  EXPECT_EQ(w.value(), Tensor::matrix({{1, 0}}));
}

TEST(ImportanceVector, HeadsAveragingToUniform) {
  Tape t;
  const Var a = t.constant(Tensor::matrix({{0.7, 0.3}, {0.7, 0.3}}));
  const Var b = t.constant(Tensor::matrix({{0.3, 0.7}, {0.3, 0.7}}));
  const Var w = importance_vector({a, b});
  EXPECT_NEAR(w.value()[0], 0.5, 1e-15);
  EXPECT_NEAR(w.value()[1], 0.5, 1e-15);
}

TEST(ImportanceVector, RejectsNonStochasticMaps) {
  Tape t;
  EXPECT_THROW(importance_vector({t.constant(Tensor({2, 2}, 1.0))}), ValidationError);
  EXPECT_THROW(importance_vector({}), ValidationError);
}

TEST(ContextGenerate, IdenticalTokensGiveEqualRows) {
  Tape t;
  StageFeatures s;
  s.tokens = {t.constant(Tensor::matrix({{1.5, -2}, {1.5, -2}, {1.5, -2}}))};
  s.attention = {{t.constant(Tensor({3, 3}, 1.0 / 3.0))}};
  const Var id = t.constant(Tensor::identity(2)), zero = t.constant(Tensor({1, 2}));
  const auto ctx = context_generate(s, {{id, zero, id, zero, id, zero}});
  const Tensor& f = ctx.features.value();
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(f(r, 0), 1.5, 1e-15);
    EXPECT_NEAR(f(r, 1), -2.0, 1e-15);
  }
}

TEST(ContextGenerate, HandPooling) {
  Tape t;
  StageFeatures s;
  s.tokens = {t.constant(Tensor::matrix({{0}, {2}}))};
  s.attention = {{t.constant(Tensor({2, 2}, 0.5))}};
  const Var id = t.constant(Tensor::identity(1)), zero = t.constant(Tensor({1, 1}));
  const Tensor f = context_generate(s, {{id, zero, id, zero, id, zero}}).features.value();
  EXPECT_DOUBLE_EQ(f(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(f(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(f(2, 0), 1.0);
}

TEST(ContextGenerate, FourStagesGiveTwelveRows) {
  Tape t;
  StageFeatures s;
  std::vector<ContextProjection<Var>> proj;
  std::mt19937_64 rng(1);
  for (int st = 0; st < 4; ++st) {
    s.tokens.push_back(t.constant(random_tensor(4, 2, rng)));
    s.attention.push_back({t.constant(stochastic_rows(4, rng))});
    const Var w = t.constant(random_tensor(2, 3, rng)), b = t.constant(Tensor({1, 3}));
    proj.push_back({w, b, w, b, w, b});
  }
  EXPECT_EQ(context_generate(s, proj).features.shape(), (Shape{12, 3}));
}

TEST(ContextGenerate, MissingAttentionFallsBackToAverage) {
  Tape t;
  StageFeatures s;
  s.tokens = {t.constant(Tensor::matrix({{0}, {2}}))};
  const Var id = t.constant(Tensor::identity(1)), zero = t.constant(Tensor({1, 1}));
  const auto ctx = context_generate(s, {{id, zero, id, zero, id, zero}});
  EXPECT_EQ(ctx.fallback_stages, (std::vector<std::size_t>{0}));
  EXPECT_DOUBLE_EQ(ctx.features.value()(2, 0), 1.0);
}

TEST(PrototypeGenerate, ZeroSecondLayerGivesPrototypes) {
  Fixture f = make_fixture(3);
  f.params.phi_w2 = Tensor(f.params.phi_w2.shape());
  f.params.phi_b2 = Tensor(f.params.phi_b2.shape());
  Tape t;
  const SaamVars v = bind(t, f.params, false);
  const auto ctx = context_generate(bind_stages(t, f), v.context);
  EXPECT_EQ(prototype_generate(ctx.features, v).value(), f.params.prototypes);
}

TEST(PrototypeGenerate, IdenticalGroupsShiftPrototypesEqually) {
  Fixture f = make_fixture(4);
  Tape t;
  const SaamVars v = bind(t, f.params, false);
  // 3S*C = 18 channels in M = 3 groups of 6; make every group the same.
  Tensor ctx({6, 3});
  for (std::size_t i = 0; i < 18; ++i) ctx[i] = static_cast<double>(i % 6) - 2.5;
  const Tensor k = prototype_generate(t.constant(ctx), v).value();
  for (std::size_t e = 1; e < 3; ++e)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(k(e, j) - f.params.prototypes(e, j), k(0, j) - f.params.prototypes(0, j), 1e-14);
    }
}

TEST(PrototypeGenerate, IndivisibleContextRejected) {
  EXPECT_THROW((SaamShape{{3}, 4, 4, 2}.validate()), ConfigError);
}

TEST(Incidence, EqualLogitsAreUniform) {
  Tape t;
  const Var a = build_incidence(t.constant(Tensor({3, 2})), t.constant(Tensor({4, 2}, 1.0)),
                                t.constant(Tensor::identity(2)));
  for (double v : a.value().data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Incidence, TwoByTwoExample) {
  Tape t;
  const Var a = build_incidence(t.constant(Tensor::matrix({{1}, {0}})),
                                t.constant(Tensor::matrix({{1}, {-1}})),
                                t.constant(Tensor::identity(1)));
  EXPECT_NEAR(a.value()(0, 0), 0.88079708, 1e-8);
  EXPECT_NEAR(a.value()(0, 1), 0.11920292, 1e-8);
  EXPECT_DOUBLE_EQ(a.value()(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(a.value()(1, 1), 0.5);
}

TEST(HyperedgeAggregate, IdentityRouting) {
  Tape t;
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  const Var h = hyperedge_aggregate(t.constant(Tensor::identity(2)), t.constant(x),
                                    t.constant(Tensor::identity(2)));
  EXPECT_EQ(h.value(), x);
}

TEST(HyperedgeAggregate, UniformIncidenceHandProduct) {
  Tape t;
  const Var h = hyperedge_aggregate(t.constant(Tensor({2, 2}, 0.5)), t.constant(Tensor::matrix({{1}, {3}})),
                                    t.constant(Tensor::identity(1)));
  EXPECT_DOUBLE_EQ(h.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(h.value()(1, 0), 2.0);
}

TEST(HyperedgeAggregate, ZeroEdgeWeights) {
  Tape t;
  const Var h = hyperedge_aggregate(t.constant(Tensor({2, 2}, 0.5)), t.constant(Tensor::matrix({{1}, {3}})),
                                    t.constant(Tensor({1, 1})));
  for (double v : h.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(NodeUpdate, Examples) {
  Tape t;
  const Tensor h = Tensor::matrix({{2}, {4}});
  EXPECT_EQ(node_update(t.constant(Tensor::identity(2)), t.constant(h), t.constant(Tensor::identity(1))).value(), h);
  const Var x = node_update(t.constant(Tensor::matrix({{0.5, 0.5}})), t.constant(h),
                            t.constant(Tensor::identity(1)));
  EXPECT_DOUBLE_EQ(x.item(), 3.0);
  const Var z = node_update(t.constant(Tensor::matrix({{0.5, 0.5}})), t.constant(Tensor({2, 1})),
                            t.constant(Tensor::identity(1)));
  EXPECT_EQ(z.item(), 0.0);
}

TEST(GatedResidual, ClosedOpenAndHalfGate) {
  Tape t;
  const Var x = t.constant(Tensor::matrix({{2}})), u = t.constant(Tensor::matrix({{4}}));
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(gated_residual(x, u, t.constant(Tensor::matrix({{-inf}}))).item(), 2.0);
  EXPECT_EQ(gated_residual(x, u, t.constant(Tensor::matrix({{inf}}))).item(), 6.0);
  EXPECT_EQ(gated_residual(x, u, t.constant(Tensor::matrix({{0.0}}))).item(), 4.0);
}

TEST(SaamForward, MatchesManualFiveStepComposition) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (bool normalize : {false, true}) {
      const Fixture f = make_fixture(seed);
      Tape t;
      const SaamOutput out = saam_forward(bind_stages(t, f), bind(t, f.params, false), {normalize});
      const auto ref = oracle::saam_five_step(mats(f.tokens), mats(f.attention), f.params, normalize);
      EXPECT_LT(oracle::max_abs_diff(ref.context, out.context.features.value()), 1e-12);
      EXPECT_LT(oracle::max_abs_diff(ref.prototypes, out.prototypes.value()), 1e-12);
      EXPECT_LT(oracle::max_abs_diff(ref.incidence, out.incidence.value()), 1e-12);
      EXPECT_LT(oracle::max_abs_diff(ref.hyperedges, out.hyperedges.value()), 1e-12);
      EXPECT_LT(oracle::max_abs_diff(ref.refined, out.refined.value()), 1e-12);
    }
  }
}

TEST(SaamForward, IncidenceRowsAreStochastic) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const Fixture f = make_fixture(seed);
    Tape t;
    const SaamOutput out = saam_forward(bind_stages(t, f), bind(t, f.params, false));
    EXPECT_LT(incidence_row_error(out.incidence.value()), 1e-12);
  }
}

TEST(SaamForward, ZeroEdgeWeightsPassThrough) {
  Fixture f = make_fixture(5);
  f.params.w_edge = Tensor(f.params.w_edge.shape());
  Tape t;
  const SaamOutput out = saam_forward(bind_stages(t, f), bind(t, f.params, false));
  EXPECT_EQ(out.refined.value(), f.tokens.back());
}

TEST(SaamForward, SingleHyperedgeIsGlobalRegion) {
  std::mt19937_64 rng(6);
  SaamShape shape{{3}, 4, 1, 2};
  SaamParams p = init_saam(shape, rng);
  const Tensor x = random_tensor(4, 3, rng);
  Tape t;
  StageFeatures s;
  s.tokens = {t.constant(x)};
  s.attention = {{t.constant(stochastic_rows(4, rng))}};
  const SaamOutput out = saam_forward(s, bind(t, p, false));
  for (double v : out.incidence.value().data()) EXPECT_EQ(v, 1.0);
  const Tensor colsum = ops::sum_axis(t.constant(x), 0).value();
  const Tensor h = ops::matmul(t.constant(colsum), t.constant(p.w_edge)).value();
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out.hyperedges.value()(0, j), h[j], 1e-12);
}

TEST(SaamForward, TokenPermutationEquivariance) {
  const Fixture f = make_fixture(7);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Fixture g = f;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) g.tokens.back()(i, j) = f.tokens.back()(perm[i], j);
  // Keep the final-stage context unchanged: permute the attention map too.
  for (auto& a : g.attention.back()) {
    Tensor b = a;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) b(i, j) = a(perm[i], perm[j]);
    a = b;
  }
  for (std::size_t i = 0; i < 4; ++i) g.params.gate(i, 0) = f.params.gate(perm[i], 0);
  Tape t;
  const SaamOutput a = saam_forward(bind_stages(t, f), bind(t, f.params, false));
  const SaamOutput b = saam_forward(bind_stages(t, g), bind(t, g.params, false));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t e = 0; e < 3; ++e)
      EXPECT_NEAR(b.incidence.value()(i, e), a.incidence.value()(perm[i], e), 1e-12);
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_NEAR(b.refined.value()(i, j), a.refined.value()(perm[i], j), 1e-12);
  }
}

TEST(SaamForward, HyperedgePermutationInvariance) {
  // Swapping the learnable offsets of two hyperedges whose context groups are
  // identical permutes A's columns and H_e's rows together; X_hat is unchanged.
  Fixture f = make_fixture(8);
  f.params.phi_w1 = Tensor(f.params.phi_w1.shape());  // equal phi output for every group
  Fixture g = f;
  const std::vector<std::size_t> perm{2, 0, 1};
  for (std::size_t e = 0; e < 3; ++e)
    for (std::size_t j = 0; j < 3; ++j) g.params.prototypes(e, j) = f.params.prototypes(perm[e], j);
  Tape t;
  const SaamOutput a = saam_forward(bind_stages(t, f), bind(t, f.params, false));
  const SaamOutput b = saam_forward(bind_stages(t, g), bind(t, g.params, false));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t e = 0; e < 3; ++e)
      EXPECT_NEAR(b.incidence.value()(i, e), a.incidence.value()(i, perm[e]), 1e-12);
  for (std::size_t i = 0; i < a.refined.value().size(); ++i)
    EXPECT_NEAR(b.refined.value()[i], a.refined.value()[i], 1e-10);
}

TEST(SaamForward, GradientsWithRespectToEachParameter) {
  const Fixture f = make_fixture(9);
  auto check = [&](auto select) {
    SaamParams p = f.params;
    const Tensor x0 = select(p);
    return gradient_check(
        [&](Tape& t, Var v) {
          SaamParams q = f.params;
          SaamVars vars = bind(t, q, false);
          select(vars) = v;
          return ops::sum(saam_forward(bind_stages(t, f), vars).refined);
        },
        x0);
  };
  EXPECT_LT(check([](auto& p) -> auto& { return p.w_query; }), 1e-4);
  EXPECT_LT(check([](auto& p) -> auto& { return p.w_edge; }), 1e-4);
  EXPECT_LT(check([](auto& p) -> auto& { return p.w_vertex; }), 1e-4);
  EXPECT_LT(check([](auto& p) -> auto& { return p.prototypes; }), 1e-4);
  EXPECT_LT(check([](auto& p) -> auto& { return p.gate; }), 1e-4);
  EXPECT_LT(check([](auto& p) -> auto& { return p.phi_w1; }), 1e-4);
}

TEST(SaamForward, GradientWithRespectToFinalTokens) {
  const Fixture f = make_fixture(12);
  const double err = gradient_check(
      [&](Tape& t, Var x) {
        StageFeatures s = bind_stages(t, f);
        s.tokens.back() = x;
        return ops::sum(saam_forward(s, bind(t, f.params, false)).refined);
      },
      f.tokens.back());
  EXPECT_LT(err, 1e-4);
}
