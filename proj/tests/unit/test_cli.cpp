#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "capvae/synthdata.hpp"
#include "cli.hpp"
#include "test_support.hpp"

using capvae::testing::TempDir;
namespace cli = capvae::cli;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small blob dataset plus a short dense training run shared by the diagnostics commands.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = std::filesystem::temp_directory_path() / "capvae_tests" / "CliRun";
    std::filesystem::remove_all(root_);
    std::filesystem::create_directories(root_);
    ASSERT_EQ(invoke({"gen-data", "--kind", "blob", "--res", "16", "--positions", "6", "--out",
                      (root_ / "blobs.capd").string()})
                  .code,
              0);
    nlohmann::json cfg{{"dataset", (root_ / "blobs.capd").string()},
                       {"model", {{"architecture", "dense"}, {"height", 16}, {"width", 16}, {"hidden", {32}},
                                  {"n_latents", 4}}},
                       {"batch_size", 8},
                       {"iterations", 20},
                       {"log_interval", 5},
                       {"checkpoint_interval", 10},
                       {"record_wall_clock", false},
                       {"out_dir", (root_ / "run").string()}};
    std::ofstream(root_ / "train.json") << cfg.dump();
    const auto r = invoke({"train", "--config", (root_ / "train.json").string(), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { std::filesystem::remove_all(root_); }

  static std::string path(const std::string& name) { return (root_ / name).string(); }
  static std::filesystem::path root_;
};

std::filesystem::path CliRun::root_;

}  // namespace

TEST(Cli, GenDataDefaultBlobGrid) {
  TempDir dir;
  const auto r = invoke({"gen-data", "--kind", "blob", "--res", "32", "--out", (dir / "b.capd").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(capvae::synth::read_dataset(dir / "b.capd").size(), 1024u);
  const auto meta = nlohmann::json::parse(slurp(dir / "b.capd.json"));
  EXPECT_EQ(meta.at("positions").get<int>(), 32);
}

TEST(Cli, GenDataSpritesFromConfigWithFlagOverride) {
  TempDir dir;
  std::ofstream(dir / "g.json") << R"({"kind": "dsprites", "shapes": 2, "scales": 2, "rotations": 2, "positions": 3})";
  const auto r = invoke({"gen-data", "--config", (dir / "g.json").string(), "--res", "16", "--rotations", "4",
                         "--out", (dir / "s.capd").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(capvae::synth::read_dataset(dir / "s.capd").size(), 2u * 2u * 4u * 3u * 3u);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(invoke({"gen-data", "--res", "8", "--positions", "2", "--out", (dir / "no" / "such" / "b.capd").string()}).code,
            cli::kExitIo);
  std::ofstream(dir / "file") << "x";
  EXPECT_EQ(invoke({"gen-data", "--res", "8", "--positions", "2", "--out", (dir / "file" / "b.capd").string()}).code,
            cli::kExitIo);
  EXPECT_EQ(invoke({"gen-data", "--bogus", "1"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"gen-data", "--kind", "teapot", "--out", (dir / "t.capd").string()}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"gen-data", "--res", "many", "--out", (dir / "t.capd").string()}).code, cli::kExitConfig);
  std::ofstream(dir / "bad.json") << R"({"colour": 1})";
  EXPECT_EQ(invoke({"gen-data", "--config", (dir / "bad.json").string(), "--out", (dir / "t.capd").string()}).code,
            cli::kExitConfig);
  EXPECT_EQ(invoke({"train", "--data", (dir / "missing.capd").string(), "--out", (dir / "r").string()}).code,
            cli::kExitIo);
  EXPECT_EQ(invoke({"curves", "--metrics", (dir / "missing.csv").string(), "--out", dir.path().string()}).code,
            cli::kExitIo);
  std::ofstream(dir / "bad.csv") << "iter,loss\n0,x\n";
  const auto r = invoke({"curves", "--metrics", (dir / "bad.csv").string(), "--out", dir.path().string()});
  EXPECT_EQ(r.code, cli::kExitIo);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_EQ(invoke({"--help"}).code, cli::kExitOk);
}

TEST_F(CliRun, TrainWritesRunDirectory) {
  EXPECT_TRUE(std::filesystem::exists(root_ / "run" / "final.capk"));
  const auto csv = slurp(root_ / "run" / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto cfg = nlohmann::json::parse(slurp(root_ / "run" / "config.json"));
  EXPECT_EQ(cfg.at("seed").get<int>(), 3);
  EXPECT_DOUBLE_EQ(cfg.at("learning_rate").get<double>(), 5e-4);
}

TEST_F(CliRun, ResumeReproducesMetrics) {
  const auto before = slurp(root_ / "run" / "metrics.csv");
  const auto r = invoke({"train", "--config", path("train.json"), "--seed", "3", "--resume",
                         path("run/ckpt_10.capk")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resumed at iteration 10"), std::string::npos);
  EXPECT_EQ(slurp(root_ / "run" / "metrics.csv"), before);
}

TEST_F(CliRun, TraverseIsDeterministic) {
  const std::vector<std::string> args{"traverse", "--ckpt", path("run/final.capk"), "--data", path("blobs.capd"),
                                      "--out", path("trav_a")};
  ASSERT_EQ(invoke(args).code, 0);
  auto again = args;
  again.back() = path("trav_b");
  ASSERT_EQ(invoke(again).code, 0);
  const auto png = slurp(root_ / "trav_a" / "traversal.png");
  EXPECT_EQ(png, slurp(root_ / "trav_b" / "traversal.png"));
  const auto meta = nlohmann::json::parse(slurp(root_ / "trav_a" / "traversal.json"));
  EXPECT_EQ(meta.at("ordering").size(), 4u);
  // Height of a PNG lives in bytes 20..23 of the IHDR chunk.
  const auto height = (static_cast<unsigned char>(png[20]) << 24) | (static_cast<unsigned char>(png[21]) << 16) |
                      (static_cast<unsigned char>(png[22]) << 8) | static_cast<unsigned char>(png[23]);
  EXPECT_EQ(height, (4 + 2) * (16 + 2) + 2);
}

TEST_F(CliRun, HeatmapAndScore) {
  ASSERT_EQ(invoke({"heatmap", "--ckpt", path("run/final.capk"), "--data", path("blobs.capd"), "--out",
                    path("heat")})
                .code,
            0);
  EXPECT_TRUE(std::filesystem::exists(root_ / "heat" / "heatmap_latent3.png"));
  EXPECT_TRUE(std::filesystem::exists(root_ / "heat" / "heatmaps.csv"));
  ASSERT_EQ(
      invoke({"score", "--ckpt", path("run/final.capk"), "--data", path("blobs.capd"), "--out", path("score")}).code,
      0);
  EXPECT_TRUE(std::filesystem::exists(root_ / "score" / "alignment.csv"));
}

TEST_F(CliRun, HeatmapRejectsNonPositionDataset) {
  ASSERT_EQ(invoke({"gen-data", "--kind", "dsprites", "--res", "16", "--shapes", "1", "--scales", "1", "--rotations",
                    "1", "--positions", "2", "--out", path("sprites.capd")})
                .code,
            0);
  EXPECT_EQ(invoke({"heatmap", "--ckpt", path("run/final.capk"), "--data", path("sprites.capd"), "--out",
                    path("heat2")})
                .code,
            cli::kExitConfig);
}

TEST_F(CliRun, CurvesFromMetrics) {
  ASSERT_EQ(invoke({"curves", "--metrics", path("run/metrics.csv"), "--out", path("curves")}).code, 0);
  EXPECT_TRUE(std::filesystem::exists(root_ / "curves" / "kl_vs_iteration.csv"));
  EXPECT_TRUE(std::filesystem::exists(root_ / "curves" / "kl_vs_loglik.csv"));
}

TEST_F(CliRun, InputsAreNotModified) {
  const auto before = slurp(root_ / "blobs.capd");
  ASSERT_EQ(
      invoke({"score", "--ckpt", path("run/final.capk"), "--data", path("blobs.capd"), "--out", path("score2")}).code,
      0);
  EXPECT_EQ(slurp(root_ / "blobs.capd"), before);
}
