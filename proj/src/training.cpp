#include "ido/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "ido/checkpoint.hpp"
#include "ido/error.hpp"

namespace ido::training {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(lr_initial > 0.0) || !(lr_decayed > 0.0)) throw ConfigError("learning rates must be positive");
  if (lr_decay_epoch < 0) throw ConfigError("lr_decay_epoch must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!(flops_unit > 0.0)) throw ConfigError("flops_unit must be positive");
  if (!(gate_temperature > 0.0)) throw ConfigError("gate_temperature must be positive");
  for (Stage s : kStages)
    if (overrides[static_cast<std::size_t>(s)].epochs || overrides[static_cast<std::size_t>(s)].lr_initial ||
        overrides[static_cast<std::size_t>(s)].lr_decayed || overrides[static_cast<std::size_t>(s)].lr_decay_epoch)
      for_stage(s).validate();
}

TrainConfig TrainConfig::for_stage(Stage stage) const {
  TrainConfig c = *this;
  const auto& o = overrides[static_cast<std::size_t>(stage)];
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr_initial) c.lr_initial = *o.lr_initial;
  if (o.lr_decayed) c.lr_decayed = *o.lr_decayed;
  if (o.lr_decay_epoch) c.lr_decay_epoch = *o.lr_decay_epoch;
  c.overrides = {};
  return c;
}

double learning_rate(const TrainConfig& config, int epoch) {
  return epoch <= config.lr_decay_epoch ? config.lr_initial : config.lr_decayed;
}

double loss(const Image& pred, const Image& gt, double flops, double lambda) {
  require(pred.same_shape(gt), "loss: shape mismatch");
  require(!pred.empty(), "loss: empty image");
  const auto& a = pred.tensor().storage();
  const auto& b = gt.tensor().storage();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size()) + lambda * flops;
}

nn::Var loss(const nn::Var& pred, const nn::Var& gt, const nn::Var& flops, double lambda) {
  require(pred->value.same_shape(gt->value), "loss: shape mismatch");
  nn::Var l1 = nn::mean_abs_diff(pred, gt);
  if (!flops || lambda == 0.0) return l1;
  return nn::add(l1, nn::affine(flops, lambda, 0.0));
}

LossParts gate_loss(const nn::Var& sample, const std::vector<double>& region_error, const gating::CostModel& cost,
                    double lambda, double flops_unit) {
  const Tensor& s = sample->value;
  const std::size_t n = static_cast<std::size_t>(s.height()) * s.width();
  require(region_error.size() == n, "gate_loss: region count mismatch");
  Tensor w(s.shape());
  for (std::size_t i = 0; i < n; ++i) w[i] = region_error[i];
  LossParts p;
  p.l1 = nn::weighted_sum(sample, w);
  gating::CostModel scaled = cost;
  scaled.base_flops /= flops_unit;
  for (auto& c : scaled.region_flops) c /= flops_unit;
  p.flops_term = nn::affine(nn::expected_flops(sample, scaled), lambda, 0.0);
  p.total = nn::add(p.l1, p.flops_term);
  return p;
}

std::vector<double> region_errors(const Tensor& i0_warp, const Tensor& i1_warp, const Tensor& gt,
                                  const std::vector<gating::Region>& regions) {
  require(i0_warp.same_shape(gt) && i1_warp.same_shape(gt), "region_errors: shape mismatch");
  std::vector<double> out;
  for (const auto& r : regions) {
    double acc = 0.0;
    for (int c = 0; c < gt.channels(); ++c)
      for (int y = r.y0; y < r.y0 + r.h; ++y)
        for (int x = r.x0; x < r.x0 + r.w; ++x)
          acc += 0.5 * (std::abs(i0_warp.at(c, y, x) - gt.at(c, y, x)) + std::abs(i1_warp.at(c, y, x) - gt.at(c, y, x)));
    out.push_back(acc / (static_cast<double>(gt.channels()) * r.h * r.w));
  }
  return out;
}

std::string to_json_line(const StepLog& log) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"step\":%ld,\"stage\":\"%s\",\"epoch\":%d,\"loss\":%.17g,\"l1\":%.17g,\"flops_term\":%.17g,\"lr\":%.17g}",
                log.step, std::string(stage_name(log.stage)).c_str(), log.epoch, log.loss, log.l1, log.flops_term,
                log.lr);
  return buf;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

nn::Var detach(const nn::Var& v) { return v ? nn::constant(v->value) : v; }

// Outputs of the frozen stages for one (sample, time) pair.
struct Frozen {
  nn::Var v0t, v1t, f0t, f1t, i0_warp, i1_warp;
  nn::Var i0t, i1t;
  std::vector<double> region_error;
};

}  // namespace

Trainer::Trainer(Model& model, const TrainConfig& config) : model_(model), config_(config) { config_.validate(); }

std::vector<StepLog> Trainer::train_stage(Stage stage, const data::Dataset& data, std::ostream* log) {
  const TrainConfig config = config_.for_stage(stage);
  require(!data.empty(), "training needs at least one sample");
  for (const auto& s : data) require(!s.times.empty(), "sample " + s.id + " has no ground-truth frames");
  model_.set_trainable(stage);
  const auto sets = model_.stage_params(stage);
  std::vector<nn::Adam> optimizers(sets.size());
  const int h = data.front().i0.height(), w = data.front().i0.width();
  const auto cost = model_.cost_model(h, w);
  const auto regions = gating::regions_for(model_.config().residual.layout, h, w);

  std::map<std::pair<std::size_t, std::size_t>, Frozen> cache;
  auto frozen = [&](std::size_t si, std::size_t ti) -> const Frozen& {
    auto it = cache.find({si, ti});
    if (it != cache.end()) return it->second;
    const auto& s = data[si];
    const double t = s.times[ti];
    RunOptions opt;
    // Residual training refines every region; fusion sees the gated pipeline.
    opt.variant = stage == Stage::Residual ? Variant::AllRegions : Variant::Gated;
    opt.until = static_cast<Stage>(static_cast<int>(stage) - 1);
    const FlowPass pass = run_flow(model_, s.i0, s.i1, s.events);
    const StepTrace tr = run_step(model_, pass, s.events, t, opt);
    Frozen f{detach(tr.v0t), detach(tr.v1t), detach(tr.f0t), detach(tr.f1t), detach(tr.i0_warp), detach(tr.i1_warp),
             nullptr, nullptr, {}};
    if (tr.refined_frames) {
      f.i0t = detach(tr.refined_frames->i0t);
      f.i1t = detach(tr.refined_frames->i1t);
    }
    if (stage == Stage::Gate) f.region_error = region_errors(tr.i0_warp->value, tr.i1_warp->value, s.targets[ti].tensor(), regions);
    return cache.emplace(std::pair{si, ti}, std::move(f)).first->second;
  };

  const std::uint64_t stage_seed = mix(config.seed, static_cast<std::uint64_t>(stage) + 1);
  std::mt19937_64 rng(stage_seed);
  std::vector<std::size_t> order(data.size());
  std::vector<StepLog> logs;
  long step = 0;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(config, epoch);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      if (config.max_steps > 0 && step >= config.max_steps) break;
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      StepLog entry{step + 1, stage, epoch, 0.0, 0.0, 0.0, lr};
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const std::size_t si = order[bi];
        const auto& s = data[si];
        const std::size_t ti = static_cast<std::size_t>(rng() % s.times.size());
        const double t = s.times[ti];
        const nn::Var gt = nn::constant(s.targets[ti].tensor());
        nn::Var total, l1, flops_term;
        switch (stage) {
          case Stage::Flow: {
            const FlowPass pass = run_flow(model_, s.i0, s.i1, s.events);
            RunOptions opt;
            opt.until = Stage::Flow;
            const StepTrace tr = run_step(model_, pass, s.events, t, opt);
            l1 = nn::affine(nn::add(nn::mean_abs_diff(tr.i0_warp, gt), nn::mean_abs_diff(tr.i1_warp, gt)), 0.5, 0.0);
            total = l1;
            break;
          }
          case Stage::Gate: {
            const Frozen& f = frozen(si, ti);
            gating::GateOptions go;
            go.mode = gating::GateMode::Train;
            go.temperature = config.gate_temperature;
            go.seed = mix(stage_seed, static_cast<std::uint64_t>(step) * 1000003u + bi);
            const auto gr = gating::gate_forward(model_.gate, f.f0t, f.f1t, go);
            auto parts = gate_loss(gr.sample, f.region_error, cost, config.lambda, config.flops_unit);
            total = parts.total;
            l1 = parts.l1;
            flops_term = parts.flops_term;
            break;
          }
          case Stage::Residual: {
            const Frozen& f = frozen(si, ti);
            const residual::ResidualInputs in{nn::constant(s.i0.tensor()), nn::constant(s.i1.tensor()), f.v0t, f.v1t,
                                              f.i0_warp, f.i1_warp, f.f0t, f.f1t};
            const auto refined = model_.residual.refine(in, gating::BinaryMask::all_dynamic(model_.residual.regions()));
            const auto frames = residual::refine_warp(f.i0_warp, f.i1_warp, refined);
            l1 = nn::affine(nn::add(nn::mean_abs_diff(frames.i0t, gt), nn::mean_abs_diff(frames.i1t, gt)), 0.5, 0.0);
            total = l1;
            break;
          }
          case Stage::Fusion: {
            const Frozen& f = frozen(si, ti);
            const nn::Var out =
                model_.fusion.forward({nn::constant(s.i0.tensor()), nn::constant(s.i1.tensor()), f.v0t, f.v1t, f.i0t, f.i1t});
            l1 = nn::mean_abs_diff(out, gt);
            total = l1;
            break;
          }
        }
        nn::backward(total);
        entry.loss += total->value[0];
        entry.l1 += l1->value[0];
        if (flops_term) entry.flops_term += flops_term->value[0];
      }
      const double count = static_cast<double>(b1 - b0);
      for (std::size_t k = 0; k < sets.size(); ++k) optimizers[k].step(*sets[k], lr, 1.0 / count);
      entry.loss /= count;
      entry.l1 /= count;
      entry.flops_term /= count;
      ++step;
      logs.push_back(entry);
      if (log) *log << to_json_line(entry) << '\n';
    }
  }
  model_.set_trainable(std::nullopt);
  return logs;
}

fs::path checkpoint_path(const fs::path& dir, Stage stage) { return dir / (std::string(stage_name(stage)) + ".ckpt"); }

std::vector<StepLog> staged_train(const ModelConfig& model_config, const TrainConfig& config, const data::Dataset& data,
                                  Stage stage, const fs::path& dir, std::ostream* log) {
  config.validate();
  Model model(model_config);
  for (Stage s : kStages) {
    if (s == stage) break;
    const fs::path p = checkpoint_path(dir, s);
    if (!fs::exists(p))
      throw DependencyError("stage '" + std::string(stage_name(stage)) + "' requires the " +
                            std::string(stage_name(s)) + " checkpoint at " + p.string());
    checkpoint::load(p, model);
  }
  Trainer trainer(model, config);
  auto logs = trainer.train_stage(stage, data, log);
  checkpoint::save(checkpoint_path(dir, stage), model, stage);
  return logs;
}

Model load_model(const fs::path& dir, Stage last) {
  const fs::path newest = checkpoint_path(dir, last);
  if (!fs::exists(newest)) throw DependencyError("missing checkpoint: " + newest.string());
  Model model(checkpoint::read_header(newest).model);
  for (Stage s : kStages) {
    const fs::path p = checkpoint_path(dir, s);
    if (!fs::exists(p)) throw DependencyError("missing checkpoint: " + p.string());
    checkpoint::load(p, model);
    if (s == last) break;
  }
  model.set_trainable(std::nullopt);
  return model;
}

}  // namespace ido::training
