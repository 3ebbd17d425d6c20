#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "ido/checkpoint.hpp"
#include "ido/config.hpp"
#include "ido/error.hpp"
#include "test_util.hpp"

using namespace ido;
using config::Json;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.flow.base_channels = 4;
  c.fusion.base_channels = 4;
  c.residual.base_channels = 4;
  c.residual.attention_channels = 4;
  return c;
}

}  // namespace

TEST(Config, RoundTripPreservesEveryField) {
  config::PipelineConfig c;
  c.dataset_root = "some/root";
  c.model = small_model();
  c.model.residual.layout = gating::Layout::Disjoint;
  c.model.seed = 77;
  c.train.lambda = 0.5;
  c.train.overrides[static_cast<int>(Stage::Gate)].epochs = 30;
  c.train.overrides[static_cast<int>(Stage::Gate)].lr_initial = 3e-3;
  c.synthetic.count = 12;
  c.eval.skip = 3;
  c.eval.times = {0.25, 0.5, 0.75};
  const auto j = config::to_json(c);
  const auto r = config::pipeline_from_json(j);
  EXPECT_EQ(config::to_json(r), j);
  EXPECT_EQ(r.model.residual.layout, gating::Layout::Disjoint);
  EXPECT_EQ(r.train.for_stage(Stage::Gate).epochs, 30);
  EXPECT_EQ(r.train.for_stage(Stage::Flow).epochs, c.train.epochs);
  EXPECT_DOUBLE_EQ(r.train.for_stage(Stage::Gate).lr_initial, 3e-3);
}

TEST(Config, DefaultsMatchTrainingSchedule) {
  const training::TrainConfig t;
  EXPECT_DOUBLE_EQ(t.lambda, 2e-4);
  EXPECT_DOUBLE_EQ(t.lr_initial, 1e-4);
  EXPECT_DOUBLE_EQ(t.lr_decayed, 1e-5);
  EXPECT_EQ(t.lr_decay_epoch, 10);
  EXPECT_EQ(t.epochs, 15);
  EXPECT_EQ(t.batch_size, 4);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = config::pipeline_from_json(Json::parse(R"({"train": {"epochs": 3}})"));
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_DOUBLE_EQ(c.train.lambda, 2e-4);
  EXPECT_EQ(c.model.flow.knots, 4);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"trian": {}})")), ConfigError);
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"model": {"flow": {"width": 3}}})")), ConfigError);
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"train": {"lambda": -1}})")), ConfigError);
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"train": {"lr_initial": 0}})")), ConfigError);
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"eval": {"times": [1.0]}})")), ConfigError);
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"model": {"residual": {"layout": "grid"}}})")), ConfigError);
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"train": {"epochs": "many"}})")), ConfigError);
  EXPECT_THROW(config::pipeline_from_json(Json::parse(R"({"train": {"overrides": {"warp": {}}}})")), ConfigError);
}

TEST(Config, LoadFromFile) {
  const auto dir = testutil::temp_dir("config_load");
  std::ofstream(dir / "ok.json") << R"({"output_dir": "elsewhere", "eval": {"skip": 3}})";
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_EQ(config::load_pipeline_config(dir / "ok.json").output_dir, "elsewhere");
  EXPECT_THROW(config::load_pipeline_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(config::load_pipeline_config(dir / "absent.json"), ConfigError);
}

TEST(Config, SeedOverrideFromEnvironment) {
  config::PipelineConfig c;
  ::setenv("IDO_SEED", "1234", 1);
  config::apply_seed_override(c);
  EXPECT_EQ(c.model.seed, 1234u);
  EXPECT_EQ(c.train.seed, 1234u);
  EXPECT_EQ(c.synthetic.seed, 1234u);
  ::setenv("IDO_SEED", "12x", 1);
  EXPECT_THROW(config::apply_seed_override(c), ConfigError);
  ::unsetenv("IDO_SEED");
  c.model.seed = 5;
  config::apply_seed_override(c);
  EXPECT_EQ(c.model.seed, 5u);
}

TEST(Checkpoint, RoundTripRestoresStageParameters) {
  const auto dir = testutil::temp_dir("ckpt_roundtrip");
  ModelConfig mc = small_model();
  mc.seed = 1;
  const Model a(mc);
  for (Stage s : kStages) checkpoint::save(dir / (std::string(stage_name(s)) + ".ckpt"), a, s);
  mc.seed = 2;
  Model b(mc);
  checkpoint::load(dir / "gate.ckpt", b);
  EXPECT_EQ(checkpoint::read_header(dir / "gate.ckpt").stage, Stage::Gate);
  auto same = [](const Model& x, const Model& y, Stage s) {
    const auto px = x.stage_params(s), py = y.stage_params(s);
    for (std::size_t i = 0; i < px.size(); ++i)
      for (std::size_t k = 0; k < px[i]->entries().size(); ++k)
        if (px[i]->entries()[k].second->value.storage() != py[i]->entries()[k].second->value.storage()) return false;
    return true;
  };
  EXPECT_TRUE(same(a, b, Stage::Gate));
  EXPECT_FALSE(same(a, b, Stage::Flow));
  for (Stage s : kStages) checkpoint::load(dir / (std::string(stage_name(s)) + ".ckpt"), b);
  for (Stage s : kStages) EXPECT_TRUE(same(a, b, s));
}

TEST(Checkpoint, RejectsCorruptOrMismatchedFiles) {
  const auto dir = testutil::temp_dir("ckpt_corrupt");
  const Model m(small_model());
  checkpoint::save(dir / "flow.ckpt", m, Stage::Flow);
  Model other(small_model());
  EXPECT_THROW(checkpoint::load(dir / "none.ckpt", other), DependencyError);

  std::ifstream is(dir / "flow.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), {});
  std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 9);
  EXPECT_THROW(checkpoint::load(dir / "trunc.ckpt", other), FormatError);
  std::ofstream(dir / "tail.ckpt", std::ios::binary) << bytes << "x";
  EXPECT_THROW(checkpoint::load(dir / "tail.ckpt", other), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << bad;
  EXPECT_THROW(checkpoint::load(dir / "magic.ckpt", other), FormatError);

  ModelConfig wider = small_model();
  wider.flow.base_channels = 6;
  Model mismatched(wider);
  EXPECT_THROW(checkpoint::load(dir / "flow.ckpt", mismatched), ConfigError);
  // Other stages' sub-configs do not matter for a flow checkpoint.
  ModelConfig layout = small_model();
  layout.residual.layout = gating::Layout::Disjoint;
  Model relaid(layout);
  EXPECT_NO_THROW(checkpoint::load(dir / "flow.ckpt", relaid));
}
