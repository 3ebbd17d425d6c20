#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ido/cli.hpp"
#include "ido/dataset.hpp"
#include "ido/evaluate.hpp"
#include "ido/metrics.hpp"
#include "test_util.hpp"

using namespace ido;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

fs::path write_config(const fs::path& dir) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << R"({
    "model": {"seed": 4,
              "flow": {"base_channels": 4}, "gate": {"base_channels": 4},
              "residual": {"base_channels": 4, "attention_channels": 4},
              "fusion": {"base_channels": 4}},
    "train": {"epochs": 1, "batch_size": 2, "lr_initial": 0.001, "seed": 2},
    "synthetic": {"count": 4, "height": 32, "width": 32, "substeps": 8, "seed": 6, "static_fraction": 0.0}
  })";
  return p;
}

// Trained tiny model shared by the tests that need checkpoints.
class TrainedCli : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = testutil::temp_dir("cli_trained");
    cfg_ = write_config(dir_).string();
    ASSERT_EQ(run({"--config", cfg_, "make-synthetic", "--out", (dir_ / "data").string()}).code, 0);
    for (const char* stage : {"flow", "gate", "residual", "fusion"}) {
      const auto r = run({"--config", cfg_, "train", "--stage", stage, "--root", (dir_ / "data").string(),
                          "--checkpoints", (dir_ / "ckpt").string()});
      ASSERT_EQ(r.code, 0) << r.err;
    }
  }
  static inline fs::path dir_;
  static inline std::string cfg_;
};

}  // namespace

TEST(Cli, ParseErrorsExitTwo) {
  EXPECT_EQ(run({}).code, cli::kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(run({"train"}).code, cli::kExitConfig);
  EXPECT_EQ(run({"train", "--stage", "warp"}).code, cli::kExitConfig);
  EXPECT_EQ(run({"--config", "/nonexistent/config.json", "flops-report"}).code, cli::kExitConfig);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(Cli, BadConfigContentExitsTwo) {
  const auto dir = testutil::temp_dir("cli_badcfg");
  std::ofstream(dir / "c.json") << R"({"train": {"lambda": -3}})";
  EXPECT_EQ(run({"--config", (dir / "c.json").string(), "flops-report"}).code, cli::kExitConfig);
}

TEST(Cli, MissingCheckpointsExitThree) {
  const auto dir = testutil::temp_dir("cli_nockpt");
  const auto cfg = write_config(dir).string();
  ASSERT_EQ(run({"--config", cfg, "make-synthetic", "--out", (dir / "data").string(), "--count", "1"}).code, 0);
  const auto data = (dir / "data").string(), ckpt = (dir / "ckpt").string();
  EXPECT_EQ(run({"--config", cfg, "train", "--stage", "gate", "--root", data, "--checkpoints", ckpt}).code,
            cli::kExitDependency);
  EXPECT_EQ(run({"--config", cfg, "interpolate", "--checkpoints", ckpt, "--seq", data + "/00000"}).code,
            cli::kExitDependency);
  EXPECT_EQ(run({"--config", cfg, "evaluate", "--checkpoints", ckpt, "--root", data}).code, cli::kExitDependency);
}

TEST(Cli, SimulateEventsOnEmptyDirectoryWarns) {
  const auto dir = testutil::temp_dir("cli_empty");
  const auto r = run({"simulate-events", "--root", dir.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_TRUE(fs::is_empty(dir));
  EXPECT_EQ(run({"simulate-events", "--root", (dir / "missing").string()}).code, cli::kExitConfig);
}

TEST(Cli, SimulateEventsStaticTripletAndRerun) {
  const auto dir = testutil::temp_dir("cli_sim");
  const auto cfg = write_config(dir).string();
  ASSERT_EQ(run({"--config", cfg, "make-synthetic", "--out", (dir / "data").string(), "--count", "3"}).code, 0);
  fs::create_directories(dir / "data" / "static");
  const Image flat = testutil::random_image(32, 32, 5);
  for (const char* name : {"im1.png", "im2.png", "im3.png"}) write_png(dir / "data" / "static" / name, flat);

  ASSERT_EQ(run({"simulate-events", "--root", (dir / "data").string()}).code, 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "static" / "events.txt"));
  EXPECT_EQ(fs::file_size(dir / "data" / "static" / "events.txt"), 0u);
  const std::string first = file_bytes(dir / "data" / "00001" / "events.txt");
  EXPECT_FALSE(first.empty());
  ASSERT_EQ(run({"simulate-events", "--root", (dir / "data").string()}).code, 0);
  EXPECT_EQ(file_bytes(dir / "data" / "00001" / "events.txt"), first);

  // One unreadable sequence: the rest are still written and the run reports failure.
  fs::create_directories(dir / "data" / "broken");
  std::ofstream(dir / "data" / "broken" / "im1.png") << "not a png";
  std::ofstream(dir / "data" / "broken" / "im2.png") << "not a png";
  const auto r = run({"simulate-events", "--root", (dir / "data").string()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("broken"), std::string::npos);
  EXPECT_EQ(file_bytes(dir / "data" / "00001" / "events.txt"), first);
}

TEST(Cli, FlopsReport) {
  const auto dir = testutil::temp_dir("cli_flops");
  const auto r = run({"flops-report", "--height", "64", "--width", "64", "--json", (dir / "f.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("all-dynamic"), std::string::npos);
  std::ifstream is(dir / "f.json");
  const auto j = nlohmann::json::parse(is);
  EXPECT_EQ(j["regions"], 9);
  EXPECT_GT(j["tera_flops_all_dynamic"].get<double>(), j["tera_flops_all_static"].get<double>());
  EXPECT_NE(run({"flops-report", "--height", "60", "--width", "64"}).code, 0);
}

TEST_F(TrainedCli, TrainWritesLogAndCheckpoints) {
  for (const char* stage : {"flow", "gate", "residual", "fusion"}) {
    EXPECT_TRUE(fs::exists(dir_ / "ckpt" / (std::string(stage) + ".ckpt")));
    std::ifstream log(dir_ / "ckpt" / ("train_" + std::string(stage) + ".jsonl"));
    std::string line;
    ASSERT_TRUE(std::getline(log, line));
    EXPECT_EQ(nlohmann::json::parse(line)["stage"], stage);
  }
}

TEST_F(TrainedCli, InterpolateTwoTimesFromOneFlowPass) {
  const auto out = dir_ / "interp";
  const auto r = run({"--config", cfg_, "interpolate", "--checkpoints", (dir_ / "ckpt").string(), "--seq",
                      (dir_ / "data" / "00000").string(), "--t", "0.25,0.75", "--out", out.string(), "--intermediates"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Image a = read_png(out / "frame_t0.2500.png"), b = read_png(out / "frame_t0.7500.png");
  EXPECT_EQ(a.height(), 32);
  EXPECT_EQ(a.width(), 32);
  EXPECT_NE(a.tensor().storage(), b.tensor().storage());
  for (const char* prefix : {"warp0_", "warp1_", "refine0_", "refine1_"})
    EXPECT_TRUE(fs::exists(out / (std::string(prefix) + "t0.2500.png"))) << prefix;
  EXPECT_NE(read_png(out / "warp0_t0.2500.png").tensor().storage(), a.tensor().storage());

  // Explicit frame and event files instead of a sequence directory.
  const auto seq = dir_ / "data" / "00001";
  const auto r2 = run({"--config", cfg_, "interpolate", "--checkpoints", (dir_ / "ckpt").string(), "--i0",
                       (seq / "im1.png").string(), "--i1", (seq / "im5.png").string(), "--events",
                       (seq / "events.txt").string(), "--t", "0.5", "--out", (dir_ / "interp2").string()});
  EXPECT_EQ(r2.code, 0) << r2.err;
  EXPECT_TRUE(fs::exists(dir_ / "interp2" / "frame_t0.5000.png"));
  EXPECT_EQ(run({"--config", cfg_, "interpolate", "--checkpoints", (dir_ / "ckpt").string(), "--seq",
                 seq.string(), "--t", "1.5"})
                .code,
            cli::kExitConfig);
}

TEST_F(TrainedCli, EvaluateTableAndJson) {
  const auto json = dir_ / "eval.json";
  const auto r = run({"--config", cfg_, "evaluate", "--checkpoints", (dir_ / "ckpt").string(), "--root",
                      (dir_ / "data").string(), "--skip", "1", "--json", json.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto none = r.out.find("Without refinement"), all = r.out.find("All regions process"), ours = r.out.find("Ours");
  ASSERT_NE(none, std::string::npos);
  ASSERT_NE(all, std::string::npos);
  ASSERT_NE(ours, std::string::npos);
  EXPECT_LT(none, all);
  EXPECT_LT(all, ours);
  std::ifstream is(json);
  const auto j = nlohmann::json::parse(is);
  ASSERT_EQ(j.size(), 3u);
  EXPECT_LE(j[2]["tera_flops"].get<double>(), j[1]["tera_flops"].get<double>());
  EXPECT_LE(j[0]["tera_flops"].get<double>(), j[2]["tera_flops"].get<double>());
  EXPECT_EQ(j[0]["n_samples"], 4);
  const auto r3 = run({"--config", cfg_, "evaluate", "--checkpoints", (dir_ / "ckpt").string(), "--root",
                       (dir_ / "data").string(), "--skip", "3", "--variant", "gated", "--json", json.string()});
  ASSERT_EQ(r3.code, 0) << r3.err;
  std::ifstream is3(json);
  const auto j3 = nlohmann::json::parse(is3);
  ASSERT_EQ(j3.size(), 1u);
  EXPECT_EQ(j3[0]["n_frames"], 12);
}

TEST_F(TrainedCli, TrainingIsReproducibleFromTheCommandLine) {
  const auto ckpt2 = dir_ / "ckpt2";
  for (const char* stage : {"flow", "gate"}) {
    ASSERT_EQ(run({"--config", cfg_, "train", "--stage", stage, "--root", (dir_ / "data").string(), "--checkpoints",
                   ckpt2.string()})
                  .code,
              0);
    EXPECT_EQ(file_bytes(ckpt2 / (std::string(stage) + ".ckpt")), file_bytes(dir_ / "ckpt" / (std::string(stage) + ".ckpt")));
  }
}

TEST(Evaluate, IdentityStubScoresAtCap) {
  data::SyntheticConfig c;
  c.count = 3;
  c.height = c.width = 32;
  const auto samples = data::make_synthetic_dataset(c);
  const eval::Predictor oracle = [](const data::Sample& s) { return eval::Prediction{s.targets, 0.0, 0, 9}; };
  const auto rep = eval::evaluate(samples, oracle, "identity");
  EXPECT_EQ(rep.psnr_mean, metrics::kPsnrCap);
  EXPECT_NEAR(rep.ssim_mean, 1.0, 1e-12);
  EXPECT_EQ(rep.n_samples, 3);
  EXPECT_EQ(rep.n_frames, 9);
  EXPECT_TRUE(rep.failures.empty());
}

TEST(Evaluate, PerSampleFailuresAreRecorded) {
  data::SyntheticConfig c;
  c.count = 3;
  c.height = c.width = 32;
  const auto samples = data::make_synthetic_dataset(c);
  const eval::Predictor flaky = [](const data::Sample& s) {
    if (s.id == "00001") throw std::runtime_error("boom");
    return eval::Prediction{s.targets, 0.0, 0, 9};
  };
  const auto rep = eval::evaluate(samples, flaky, "flaky");
  EXPECT_EQ(rep.n_samples, 2);
  ASSERT_EQ(rep.failures.size(), 1u);
  EXPECT_NE(rep.failures[0].find("00001"), std::string::npos);
}
