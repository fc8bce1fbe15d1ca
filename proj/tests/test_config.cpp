#include <gtest/gtest.h>

#include <string>

#include "hgcl/config.hpp"
#include "hgcl/errors.hpp"

using namespace hgcl;

namespace {

std::string error_of(const std::string& text, const std::vector<std::string>& overrides = {}) {
  try {
    parse_config(text, overrides);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, DefaultsCarryPublishedHyperparameters) {
  const ExperimentConfig c = parse_config("");
  EXPECT_EQ(c.model.num_hyperedges, 16u);
  EXPECT_EQ(c.model.fusion_ratios, (std::vector<std::size_t>{16, 8, 4, 1}));
  EXPECT_EQ(c.loss.curvature, 0.1);
  EXPECT_EQ(c.loss.tau, 0.1);
  EXPECT_EQ(c.loss.lambda, 1.0);
  EXPECT_EQ(c.loss.beta, 0.1);
  EXPECT_TRUE(c.overrides_from_defaults().empty());
}

TEST(Config, ToyPresetRecordsItsOverrides) {
  const ExperimentConfig c = ExperimentConfig::toy_defaults();
  EXPECT_EQ(c.model.num_hyperedges, 8u);
  const auto o = c.overrides_from_defaults();
  EXPECT_NE(std::find(o.begin(), o.end(), "model.num_hyperedges"), o.end());
  EXPECT_NE(std::find(o.begin(), o.end(), "model.fusion_ratios"), o.end());
}

TEST(Config, RoundTripIsIdentity) {
  ExperimentConfig c = ExperimentConfig::toy_defaults();
  c.loss.mode = hhcl::LossMode::Hybrid;
  c.loss.w_econ = 0.25;
  c.model.contrast_levels = hhcl::ContrastLevels::All;
  c.model.normalize_hyperedges = true;
  c.train.seed = 12345678901234ULL;
  c.train.learning_rate = 0.1 / 3.0;
  c.ablation.loss_weights = {{0.1, 0.1, 0.1}, {0.5, 0.0, 1.0 / 7.0}};
  c.output.directory = "runs/with space";
  const ExperimentConfig back = parse_config(to_yaml(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_yaml(back), to_yaml(c));
}

TEST(Config, UnknownKeyNamesFieldAndLine) {
  const std::string e = error_of("model:\n  num_hyperedges: 8\n  hyperedgez: 4\n");
  EXPECT_NE(e.find("model.hyperedgez"), std::string::npos) << e;
  EXPECT_NE(e.find("line 3"), std::string::npos) << e;
}

TEST(Config, UnknownSectionRejected) {
  EXPECT_NE(error_of("optimizer:\n  lr: 1\n").find("optimizer"), std::string::npos);
}

TEST(Config, WrongTypeRejected) {
  const std::string e = error_of("train:\n  epochs: many\n");
  EXPECT_NE(e.find("train.epochs"), std::string::npos) << e;
}

TEST(Config, MalformedYamlRejected) { EXPECT_FALSE(error_of("model: [1, 2\n").empty()); }

TEST(Config, InvalidValuesRejected) {
  EXPECT_FALSE(error_of("loss:\n  curvature: 0\n").empty());
  EXPECT_FALSE(error_of("loss:\n  tau: -1\n").empty());
  EXPECT_FALSE(error_of("train:\n  batch_size: 1\n").empty());
  EXPECT_FALSE(error_of("model:\n  fusion_ratios: [16, 8, 4]\n").empty());
  EXPECT_FALSE(error_of("ablation:\n  seeds: 0\n").empty());
  EXPECT_FALSE(error_of("loss:\n  mode: sideways\n").empty());
}

TEST(Config, OverridesApplyBeforeDecoding) {
  const ExperimentConfig c = parse_config("train:\n  epochs: 30\n", {"train.epochs=0", "loss.mode=hybrid"});
  EXPECT_EQ(c.train.epochs, 0u);
  EXPECT_EQ(c.loss.mode, hhcl::LossMode::Hybrid);
  EXPECT_FALSE(error_of("", {"train.epochs"}).empty());
  EXPECT_FALSE(error_of("", {"epochs=3"}).empty());
  EXPECT_FALSE(error_of("", {"train.bogus=3"}).empty());
}

TEST(Config, DatasetSeedFollowsTrainSeed) {
  ExperimentConfig a, b;
  b.train.seed = 2;
  EXPECT_NE(a.synthetic_spec().seed, b.synthetic_spec().seed);
  EXPECT_EQ(a.synthetic_spec().seed, ExperimentConfig{}.synthetic_spec().seed);
}
