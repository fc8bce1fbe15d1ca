#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hgcl/serialize.hpp"
#include "hgcl/tensor.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(HGCL_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) o.output += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hgcl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A tiny, fast run: 2 samples per class, 1 epoch.
std::string write_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path path = dir / "config.yaml";
  std::ofstream(path) << "model:\n  num_hyperedges: 8\n  fusion_ratios: [8, 4, 1]\n"
                         "data:\n  samples_per_class: 2\n  test_samples_per_class: 1\n"
                         "train:\n  epochs: 1\n  batch_size: 8\n  snapshot_samples: 3\n"
                         "output:\n  directory: "
                      << (dir / "run").string() << "\n"
                      << extra;
  return path.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, TrainWritesMetrics) {
  const auto dir = scratch("train");
  const Outcome o = run("train -q " + write_config(dir));
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_TRUE(fs::exists(dir / "run" / "metrics.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "loss_trace.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "run" / "incidence"));
  // A second run into the same directory needs --force.
  EXPECT_EQ(run("train -q " + write_config(dir)).code, 2);
  EXPECT_EQ(run("train -q --force " + write_config(dir)).code, 0);
  fs::remove_all(dir);
}

TEST(Cli, EpochsOverrideGivesEmptyHistory) {
  const auto dir = scratch("epochs0");
  const Outcome o = run("train -q " + write_config(dir) + " --set train.epochs=0");
  ASSERT_EQ(o.code, 0) << o.output;
  const std::string m = slurp(dir / "run" / "metrics.json");
  EXPECT_NE(m.find("\"history\": []"), std::string::npos) << m.substr(0, 400);
  fs::remove_all(dir);
}

TEST(Cli, MissingConfigExitsTwo) {
  EXPECT_EQ(run("train /nonexistent/config.yaml").code, 2);
}

TEST(Cli, MalformedConfigExitsTwoWithField) {
  const auto dir = scratch("bad");
  const Outcome o = run("train " + write_config(dir, "loss:\n  temperature: 0.1\n"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("loss.temperature"), std::string::npos) << o.output;
  EXPECT_NE(o.output.find("line"), std::string::npos) << o.output;
  fs::remove_all(dir);
}

TEST(Cli, DivergentRunExitsThree) {
  const auto dir = scratch("diverge");
  const Outcome o = run("train -q " + write_config(dir) +
                        " --set train.learning_rate=1e200 --set train.grad_clip=0 --set train.epochs=3");
  EXPECT_EQ(o.code, 3) << o.output;
  EXPECT_TRUE(fs::exists(dir / "run" / "failure.json"));
  fs::remove_all(dir);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("verify nosuchsuite").code, 2);
}

TEST(Cli, VerifyLorentzPasses) {
  const Outcome o = run("verify lorentz");
  EXPECT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("PASS"), std::string::npos);
}

TEST(Cli, BrokenClampFailsAndNamesInvariant) {
  const Outcome o = run("verify lorentz --clamp-floor 0");
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.output.find("FAIL"), std::string::npos) << o.output;
}

TEST(Cli, ExportHeatmaps) {
  const auto dir = scratch("export");
  ASSERT_EQ(run("train -q " + write_config(dir)).code, 0);
  const fs::path runp = dir / "run";
  const Outcome one = run("export-heatmaps " + runp.string() + " 1");
  ASSERT_EQ(one.code, 0) << one.output;
  const hgcl::Tensor h = hgcl::load_csv(runp / "heatmaps" / "sample_1.csv");
  ASSERT_EQ(h.shape(), (hgcl::Shape{16, 8}));
  for (std::size_t i = 0; i < h.rows(); ++i) {
    double s = 0.0;
    for (double v : h.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  // Columns keep the stored incidence order: row r*side+c is grid cell (r, c).
  const hgcl::Tensor stored = hgcl::load_binary(runp / "incidence" / "sample_1.bin");
  EXPECT_EQ(h, stored);
  const std::string sidecar = slurp(runp / "heatmaps" / "sample_1.json");
  EXPECT_NE(sidecar.find("\"tokens_per_side\": 4"), std::string::npos) << sidecar;

  const Outcome all = run("export-heatmaps " + runp.string());
  ASSERT_EQ(all.code, 0) << all.output;
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(runp / "heatmaps"))
    if (e.path().extension() == ".csv") ++csvs;
  EXPECT_EQ(csvs, 3u);

  const Outcome missing = run("export-heatmaps " + runp.string() + " 99");
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.output.find("available: 0, 1, 2"), std::string::npos) << missing.output;
  fs::remove_all(dir);
}

TEST(Cli, AblateEmptyGridExitsTwo) {
  const auto dir = scratch("ablate_empty");
  const Outcome o = run("ablate " + write_config(dir, "ablation:\n  components: false\n  loss_weights: []\n"));
  EXPECT_EQ(o.code, 2) << o.output;
  fs::remove_all(dir);
}

TEST(Cli, AblateWritesBothTables) {
  const auto dir = scratch("ablate");
  const Outcome o = run("ablate --threads 1 " +
                        write_config(dir, "ablation:\n  seeds: 1\n  loss_weights: [[0.1, 0.1, 0.1], [0.5, 0.1, 0.1]]\n"));
  ASSERT_EQ(o.code, 0) << o.output;
  const std::string comp = slurp(dir / "run" / "components.csv");
  for (const char* row : {"\nnone,", "\nhhcl_only,", "\nsaam_only,", "\nboth,"})
    EXPECT_NE(comp.find(row), std::string::npos) << row;
  const std::string weights = slurp(dir / "run" / "loss_weights.csv");
  const std::string tenth = hgcl::format_double(0.1);
  EXPECT_NE(weights.find("," + tenth + "," + tenth + "," + tenth + ","), std::string::npos) << weights;
  fs::remove_all(dir);
}
