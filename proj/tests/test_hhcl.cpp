#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hgcl/errors.hpp"
#include "hgcl/gradcheck.hpp"
#include "hgcl/hhcl.hpp"
#include "hgcl/ops.hpp"
#include "oracles.hpp"

using namespace hgcl;
using namespace hgcl::hhcl;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t({r, c});
  for (double& v : t.data()) v = n(rng);
  return t;
}

const std::vector<std::size_t> kRatios421{4, 2, 1};

}  // namespace

TEST(BuildHierarchy, IdenticalLeavesTieBreakToLowestPairs) {
  const Tensor leaves = Tensor::matrix({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}});
  const auto tree = build_hierarchy(leaves, kRatios421);
  EXPECT_EQ(tree.parent_maps[0], (std::vector<std::size_t>{0, 0, 1, 1}));
  for (const auto& level : tree.levels)
    for (std::size_t i = 0; i < level.rows(); ++i) {
      EXPECT_DOUBLE_EQ(level(i, 0), 0.3);
      EXPECT_DOUBLE_EQ(level(i, 1), 0.7);
    }
}

TEST(BuildHierarchy, ForcedSingleMerge) {
  const std::vector<std::size_t> ratios{2, 1};
  const auto tree = build_hierarchy(Tensor::matrix({{1, 0}, {0, 1}}), ratios);
  EXPECT_EQ(tree.levels.back(), Tensor::matrix({{0.5, 0.5}}));
}

TEST(BuildHierarchy, MostSimilarPairsMerge) {
  const Tensor leaves = Tensor::matrix({{1, 0}, {0.9, 0.1}, {0, 1}, {0.1, 0.9}});
  const auto tree = build_hierarchy(leaves, kRatios421);
  EXPECT_EQ(tree.parent_maps[0], (std::vector<std::size_t>{0, 0, 1, 1}));
  EXPECT_NEAR(tree.levels[1](0, 0), 0.95, 1e-15);
  EXPECT_NEAR(tree.levels[1](0, 1), 0.05, 1e-15);
  EXPECT_NEAR(tree.levels[1](1, 0), 0.05, 1e-15);
  EXPECT_NEAR(tree.levels[1](1, 1), 0.95, 1e-15);
}

TEST(BuildHierarchy, MatchesExhaustivePairingOnRandomLeaves) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor leaves = random_tensor(4, 3, rng);
    const auto tree = build_hierarchy(leaves, kRatios421);
    const auto best = oracle::best_pairing_of_four(oracle::from_tensor(leaves));
    const auto& pm = tree.parent_maps[0];
    EXPECT_EQ(pm[best[0]], pm[best[1]]);
    EXPECT_EQ(pm[best[2]], pm[best[3]]);
    EXPECT_NE(pm[best[0]], pm[best[2]]);
  }
}

TEST(BuildHierarchy, LevelSizesAndParentMeans) {
  std::mt19937_64 rng(4);
  const std::vector<std::size_t> ratios{16, 8, 4, 1};
  const Tensor leaves = random_tensor(16, 5, rng);
  const auto tree = build_hierarchy(leaves, ratios);
  ASSERT_EQ(tree.depth(), 4u);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(tree.levels[l].rows(), ratios[l]);
  for (std::size_t l = 0; l + 1 < 4; ++l) {
    const auto& pm = tree.parent_maps[l];
    for (std::size_t p = 0; p < ratios[l + 1]; ++p) {
      std::vector<double> mean(5, 0.0);
      std::size_t count = 0;
      for (std::size_t c = 0; c < pm.size(); ++c) {
        if (pm[c] != p) continue;
        ++count;
        for (std::size_t j = 0; j < 5; ++j) mean[j] += tree.levels[l](c, j);
      }
      ASSERT_GT(count, 0u);
      for (std::size_t j = 0; j < 5; ++j)
        EXPECT_NEAR(tree.levels[l + 1](p, j), mean[j] / static_cast<double>(count), 1e-12);
    }
  }
}

TEST(BuildHierarchy, InvalidRatiosRejected) {
  const Tensor leaves({4, 2}, 1.0);
  const std::vector<std::size_t> wrong_start{8, 4, 1}, no_root{4, 2}, increasing{4, 4, 1};
  EXPECT_THROW(build_hierarchy(leaves, wrong_start), ConfigError);
  EXPECT_THROW(build_hierarchy(leaves, no_root), ConfigError);
  EXPECT_THROW(build_hierarchy(leaves, increasing), ConfigError);
}

TEST(HierarchyVars, TapeLevelsMatchStructure) {
  std::mt19937_64 rng(5);
  const Tensor leaves = random_tensor(8, 3, rng);
  const std::vector<std::size_t> ratios{8, 4, 1};
  const auto tree = build_hierarchy(leaves, ratios);
  Tape t;
  const auto vars = hierarchy_vars(t.constant(leaves), tree);
  for (std::size_t l = 0; l < tree.depth(); ++l)
    for (std::size_t i = 0; i < tree.levels[l].size(); ++i)
      EXPECT_NEAR(vars.levels[l].value()[i], tree.levels[l][i], 1e-12);
}

TEST(HybridDistance, Examples) {
  Tape t;
  const Var a = t.constant(Tensor::matrix({{0.4, -1.0}}));
  EXPECT_NEAR(hybrid_distance(a, a, 1.0, 0.1).item(), 0.0, 2e-3);
  EXPECT_NEAR(hybrid_distance(a, a, 1.0, 0.1).item(), std::acosh(1.0 + 1e-7) / std::sqrt(0.1), 1e-15);
  const Var b = t.constant(Tensor::matrix({{std::sqrt(3.0), 0.0}}));
  const Var o = t.constant(Tensor::matrix({{0.0, 0.0}}));
  EXPECT_NEAR(hybrid_distance(b, o, 1.0, 1.0).item(), 3.0490087, 1e-7);
  EXPECT_NEAR(hybrid_distance(b, o, 1.0, 1.0).item(), std::sqrt(3.0) + std::acosh(2.0), 1e-14);
  EXPECT_NEAR(hybrid_distance(b, o, 0.0, 1.0).item(), std::sqrt(3.0), 1e-15);
}

TEST(Contrastive, PairWithSameLabelIsZero) {
  Tape t;
  const std::vector<int> labels{3, 3};
  const Var z = t.constant(Tensor::matrix({{0.1, 0.2}, {-0.4, 1.0}}));
  EXPECT_NEAR(supervised_contrastive(z, labels, 0.1, DistanceKind::Hybrid, 1.0, 0.1).item(), 0.0,
              1e-15);
}

TEST(Contrastive, PairWithDifferentLabelsSkipsAnchors) {
  Tape t;
  const std::vector<int> labels{0, 1};
  const Var z = t.constant(Tensor::matrix({{0.1, 0.2}, {-0.4, 1.0}}));
  EXPECT_EQ(supervised_contrastive(z, labels, 0.1, DistanceKind::Euclidean, 1.0, 0.1).item(), 0.0);
}

TEST(Contrastive, MatchesTripleEnumeration) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> label(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    for (std::size_t b = 2; b <= 4; ++b) {
      const Tensor z = random_tensor(b, 3, rng, 0.5);
      std::vector<int> labels(b);
      for (int& l : labels) l = label(rng);
      const auto zm = oracle::from_tensor(z);
      for (auto kind : {DistanceKind::Euclidean, DistanceKind::Hyperbolic, DistanceKind::Hybrid}) {
        oracle::Mat d(b, std::vector<double>(b, 0.0));
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            const double e = oracle::euclidean_distance(zm[i], zm[j]);
            const double h = oracle::hyperbolic_distance(zm[i], zm[j], 0.1);
            d[i][j] = kind == DistanceKind::Euclidean ? e : kind == DistanceKind::Hyperbolic ? h : e + 0.7 * h;
          }
        Tape t;
        const double got = supervised_contrastive(t.constant(z), labels, 0.1, kind, 0.7, 0.1).item();
        EXPECT_NEAR(got, oracle::contrastive_enumeration(d, labels, 0.1), 1e-8);
      }
    }
  }
}

TEST(Contrastive, InvariantToReordering) {
  std::mt19937_64 rng(2);
  const Tensor z = random_tensor(6, 3, rng);
  const std::vector<int> labels{0, 1, 0, 2, 1, 2};
  const std::vector<std::size_t> perm{4, 2, 5, 0, 3, 1};
  Tensor zp({6, 3});
  std::vector<int> lp(6);
  for (std::size_t i = 0; i < 6; ++i) {
    lp[i] = labels[perm[i]];
    for (std::size_t j = 0; j < 3; ++j) zp(i, j) = z(perm[i], j);
  }
  Tape t;
  const double a = supervised_contrastive(t.constant(z), labels, 0.1, DistanceKind::Hybrid, 1.0, 0.1).item();
  const double b = supervised_contrastive(t.constant(zp), lp, 0.1, DistanceKind::Hybrid, 1.0, 0.1).item();
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(Contrastive, UniformDistancesGiveLogOfOthers) {
  // Identical points with one label: every anchor sees B-1 equal terms.
  for (std::size_t b : {2u, 3u, 5u}) {
    Tape t;
    const std::vector<int> labels(b, 1);
    const double v =
        supervised_contrastive(t.constant(Tensor({b, 2}, 0.3)), labels, 0.1, DistanceKind::Euclidean, 1.0, 0.1).item();
    EXPECT_NEAR(v, std::log(static_cast<double>(b - 1)), 1e-12);
  }
}

TEST(Contrastive, SingleSampleBatchRejected) {
  Tape t;
  const std::vector<int> labels{0};
  EXPECT_THROW(supervised_contrastive(t.constant(Tensor({1, 2})), labels, 0.1, DistanceKind::Hybrid, 1.0, 0.1),
               BatchError);
}

TEST(Popl, ZeroWhenParentsEqualChildren) {
  const Tensor leaves = Tensor::matrix({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}});
  const auto tree = build_hierarchy(leaves, kRatios421);
  Tape t;
  const double v = popl(hierarchy_vars(t.constant(leaves), tree), 0.1).item();
  EXPECT_NEAR(v, std::acosh(1.0 + 1e-7) / std::sqrt(0.1), 1e-12);
}

TEST(Popl, SingleTransitionKnownValue) {
  HierarchyVars h;
  Tape t;
  h.levels = {t.constant(Tensor::matrix({{std::sqrt(3.0), 0.0}})), t.constant(Tensor::matrix({{0.0, 0.0}}))};
  h.parent_maps = {{0}};
  EXPECT_NEAR(popl(h, 1.0).item(), 1.3169579, 1e-7);
}

TEST(Popl, ScaledToOriginIsAtFloor) {
  std::mt19937_64 rng(3);
  const Tensor leaves = random_tensor(4, 3, rng);
  const auto tree = build_hierarchy(leaves, kRatios421);
  Tape t;
  const double v = popl(hierarchy_vars(ops::scale(t.constant(leaves), 0.0), tree), 1.0).item();
  EXPECT_NEAR(v, std::acosh(1.0 + 1e-7), 1e-12);
}

TEST(Popl, NonNegative) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const Tensor leaves = random_tensor(4, 3, rng);
    const auto tree = build_hierarchy(leaves, kRatios421);
    Tape t;
    EXPECT_GE(popl(hierarchy_vars(t.constant(leaves), tree), 0.1).item(), 0.0);
  }
}

TEST(HhclTotal, SplitWithOnlyPartialOrderWeight) {
  std::mt19937_64 rng(9);
  LossWeights w;
  w.w_hcon = 0.0;
  w.w_econ = 0.0;
  w.w_hpop = 0.3;
  Tape t;
  std::vector<HierarchyVars> batch;
  for (int s = 0; s < 4; ++s) {
    const Tensor leaves = random_tensor(4, 3, rng);
    batch.push_back(hierarchy_vars(t.constant(leaves), build_hierarchy(leaves, kRatios421)));
  }
  const std::vector<int> labels{0, 1, 0, 1};
  const auto terms = hhcl_total(batch, labels, w, LossMode::Split);
  double expected = 0.0;
  for (const auto& h : batch) expected += popl(h, w.curvature).item();
  EXPECT_NEAR(terms.total.item(), 0.3 * expected / 4.0, 1e-14);
}

TEST(HhclTotal, HybridEqualsComponentComposition) {
  std::mt19937_64 rng(10);
  const LossWeights w;
  Tape t;
  std::vector<HierarchyVars> batch;
  std::vector<Var> roots;
  for (int s = 0; s < 4; ++s) {
    const Tensor leaves = random_tensor(4, 3, rng);
    batch.push_back(hierarchy_vars(t.constant(leaves), build_hierarchy(leaves, kRatios421)));
    roots.push_back(batch.back().levels.back());
  }
  const std::vector<int> labels{0, 1, 0, 1};
  const auto terms = hhcl_total(batch, labels, w, LossMode::Hybrid);
  const double con = supervised_contrastive(ops::concat_rows(roots), labels, w.tau, DistanceKind::Hybrid,
                                            w.lambda, w.curvature).item();
  double pop = 0.0;
  for (const auto& h : batch) pop += popl(h, w.curvature).item();
  EXPECT_NEAR(terms.total.item(), con + w.beta * pop / 4.0, 1e-12);
  EXPECT_EQ(terms.econ.item(), 0.0);
}

TEST(HhclTotal, TrivialTreeSameLabelPairIsZero) {
  LossWeights w;
  w.beta = 0.0;
  Tape t;
  std::vector<HierarchyVars> batch(2);
  batch[0].levels = {t.constant(Tensor::matrix({{0.5, 0.1}}))};
  batch[1].levels = {t.constant(Tensor::matrix({{-0.2, 0.3}}))};
  const std::vector<int> labels{4, 4};
  EXPECT_NEAR(hhcl_total(batch, labels, w, LossMode::Hybrid).total.item(), 0.0, 1e-15);
}

TEST(TotalLoss, Examples) {
  Tape t;
  const std::vector<int> labels{1, 2};
  const Var logits = t.constant(Tensor({2, 4}));
  EXPECT_NEAR(total_loss(logits, labels, t.constant(Tensor::scalar(9.0)), 0.0).item(), std::log(4.0), 1e-15);
  // CE of ln 4 plus alpha * 0.5.
  EXPECT_NEAR(total_loss(logits, labels, t.constant(Tensor::scalar(0.5)), 1.0).item(), std::log(4.0) + 0.5,
              1e-15);
}

TEST(HhclGradients, AllModesAndLevels) {
  std::mt19937_64 rng(13);
  const Tensor leaves = random_tensor(16, 3, rng, 0.7);
  const std::vector<int> labels{0, 1, 0, 1};
  std::vector<HierarchyTree> trees;
  for (std::size_t s = 0; s < 4; ++s) {
    Tensor l({4, 3});
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) l(i, j) = leaves(s * 4 + i, j);
    trees.push_back(build_hierarchy(l, kRatios421));
  }
  for (auto mode : {LossMode::Hybrid, LossMode::Split}) {
    for (auto levels : {ContrastLevels::Root, ContrastLevels::All}) {
      const double err = gradient_check(
          [&](Tape&, Var x) {
            std::vector<HierarchyVars> batch;
            for (std::size_t s = 0; s < 4; ++s)
              batch.push_back(hierarchy_vars(ops::slice_rows(x, s * 4, s * 4 + 4), trees[s]));
            return hhcl_total(batch, labels, LossWeights{}, mode, levels).total;
          },
          leaves);
      EXPECT_LT(err, 1e-4);
    }
  }
}

TEST(HhclGradients, NearCoincidentPoints) {
  std::mt19937_64 rng(14);
  Tensor z = random_tensor(3, 2, rng);
  for (std::size_t j = 0; j < 2; ++j) z(1, j) = z(0, j) + (j == 0 ? 1e-2 : 0.0);
  const std::vector<int> labels{0, 0, 1};
  const double err = gradient_check(
      [&](Tape&, Var x) { return supervised_contrastive(x, labels, 0.1, DistanceKind::Hybrid, 1.0, 0.1); }, z);
  EXPECT_LT(err, 1e-4);
}
