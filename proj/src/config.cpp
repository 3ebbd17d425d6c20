#include "ido/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "ido/error.hpp"

namespace ido::config {

namespace {

// Reads optional fields and rejects keys nobody asked for.
class Fields {
public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string layout_name(gating::Layout l) { return l == gating::Layout::Overlapping ? "overlapping" : "disjoint"; }
gating::Layout parse_layout(const std::string& s) {
  if (s == "overlapping") return gating::Layout::Overlapping;
  if (s == "disjoint") return gating::Layout::Disjoint;
  throw ConfigError("unknown region layout: " + s);
}

}  // namespace

Json to_json(const ModelConfig& c) {
  return Json{{"image_channels", c.image_channels},
              {"voxel_bins", c.voxel_bins},
              {"seed", c.seed},
              {"flow", {{"base_channels", c.flow.base_channels}, {"depth", c.flow.depth}, {"knots", c.flow.knots}}},
              {"gate", {{"base_channels", c.gate.base_channels}, {"temperature", c.gate.temperature}}},
              {"residual",
               {{"base_channels", c.residual.base_channels},
                {"attention_channels", c.residual.attention_channels},
                {"layout", layout_name(c.residual.layout)}}},
              {"fusion",
               {{"base_channels", c.fusion.base_channels}, {"heads", c.fusion.heads}, {"window", c.fusion.window}}}};
}

ModelConfig model_from_json(const Json& j) {
  ModelConfig c;
  {
    Fields f(j, "model");
    f.get("image_channels", c.image_channels);
    f.get("voxel_bins", c.voxel_bins);
    f.get("seed", c.seed);
    if (auto* s = f.child("flow")) {
      Fields g(*s, "model.flow");
      g.get("base_channels", c.flow.base_channels);
      g.get("depth", c.flow.depth);
      g.get("knots", c.flow.knots);
    }
    if (auto* s = f.child("gate")) {
      Fields g(*s, "model.gate");
      g.get("base_channels", c.gate.base_channels);
      g.get("temperature", c.gate.temperature);
    }
    if (auto* s = f.child("residual")) {
      Fields g(*s, "model.residual");
      g.get("base_channels", c.residual.base_channels);
      g.get("attention_channels", c.residual.attention_channels);
      std::string layout = layout_name(c.residual.layout);
      g.get("layout", layout);
      c.residual.layout = parse_layout(layout);
    }
    if (auto* s = f.child("fusion")) {
      Fields g(*s, "model.fusion");
      g.get("base_channels", c.fusion.base_channels);
      g.get("heads", c.fusion.heads);
      g.get("window", c.fusion.window);
    }
  }
  c.validate();
  return c;
}

namespace {

Json overrides_json(const training::TrainConfig& c) {
  Json j = Json::object();
  for (Stage s : kStages) {
    const auto& o = c.overrides[static_cast<std::size_t>(s)];
    Json e = Json::object();
    if (o.epochs) e["epochs"] = *o.epochs;
    if (o.lr_initial) e["lr_initial"] = *o.lr_initial;
    if (o.lr_decayed) e["lr_decayed"] = *o.lr_decayed;
    if (o.lr_decay_epoch) e["lr_decay_epoch"] = *o.lr_decay_epoch;
    if (!e.empty()) j[std::string(stage_name(s))] = e;
  }
  return j;
}

template <class T>
void get_optional(Fields& f, const char* key, std::optional<T>& out) {
  T v{};
  bool present = false;
  if (const Json* p = f.child(key)) {
    present = true;
    try {
      v = p->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("train.overrides.") + key + ": " + e.what());
    }
  }
  if (present) out = v;
}

}  // namespace

Json to_json(const training::TrainConfig& c) {
  return Json{{"lambda", c.lambda},
              {"lr_initial", c.lr_initial},
              {"lr_decayed", c.lr_decayed},
              {"lr_decay_epoch", c.lr_decay_epoch},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"max_steps", c.max_steps},
              {"flops_unit", c.flops_unit},
              {"gate_temperature", c.gate_temperature},
              {"seed", c.seed},
              {"overrides", overrides_json(c)}};
}

training::TrainConfig train_from_json(const Json& j) {
  training::TrainConfig c;
  {
    Fields f(j, "train");
    f.get("lambda", c.lambda);
    f.get("lr_initial", c.lr_initial);
    f.get("lr_decayed", c.lr_decayed);
    f.get("lr_decay_epoch", c.lr_decay_epoch);
    f.get("epochs", c.epochs);
    f.get("batch_size", c.batch_size);
    f.get("max_steps", c.max_steps);
    f.get("flops_unit", c.flops_unit);
    f.get("gate_temperature", c.gate_temperature);
    f.get("seed", c.seed);
    if (const Json* o = f.child("overrides")) {
      Fields g(*o, "train.overrides");
      for (Stage s : kStages) {
        const std::string name(stage_name(s));
        if (const Json* e = g.child(name.c_str())) {
          Fields h(*e, "train.overrides." + name);
          auto& ov = c.overrides[static_cast<std::size_t>(s)];
          get_optional(h, "epochs", ov.epochs);
          get_optional(h, "lr_initial", ov.lr_initial);
          get_optional(h, "lr_decayed", ov.lr_decayed);
          get_optional(h, "lr_decay_epoch", ov.lr_decay_epoch);
        }
      }
    }
  }
  c.validate();
  return c;
}

Json to_json(const data::SyntheticConfig& c) {
  return Json{{"count", c.count},         {"height", c.height},
              {"width", c.width},         {"seed", c.seed},
              {"times", c.times},         {"threshold", c.threshold},
              {"substeps", c.substeps},   {"max_speed", c.max_speed},
              {"max_accel", c.max_accel}, {"static_fraction", c.static_fraction},
              {"textured_background", c.textured_background}};
}

data::SyntheticConfig synthetic_from_json(const Json& j) {
  data::SyntheticConfig c;
  Fields f(j, "synthetic");
  f.get("count", c.count);
  f.get("height", c.height);
  f.get("width", c.width);
  f.get("seed", c.seed);
  f.get("times", c.times);
  f.get("threshold", c.threshold);
  f.get("substeps", c.substeps);
  f.get("max_speed", c.max_speed);
  f.get("max_accel", c.max_accel);
  f.get("static_fraction", c.static_fraction);
  f.get("textured_background", c.textured_background);
  if (c.count < 1 || c.height < 8 || c.width < 8 || c.substeps < 1 || c.threshold <= 0.0)
    throw ConfigError("synthetic: invalid values");
  for (double t : c.times)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("synthetic.times must lie in (0, 1)");
  return c;
}

Json to_json(const PipelineConfig& c) {
  return Json{{"dataset_root", c.dataset_root.string()},
              {"checkpoint_dir", c.checkpoint_dir.string()},
              {"output_dir", c.output_dir.string()},
              {"event_threshold", c.event_threshold},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"synthetic", to_json(c.synthetic)},
              {"eval", {{"skip", c.eval.skip}, {"times", c.eval.times}, {"max_samples", c.eval.max_samples}}}};
}

PipelineConfig pipeline_from_json(const Json& j) {
  PipelineConfig c;
  Fields f(j, "config");
  std::string root = c.dataset_root.string(), ckpt = c.checkpoint_dir.string(), out = c.output_dir.string();
  f.get("dataset_root", root);
  f.get("checkpoint_dir", ckpt);
  f.get("output_dir", out);
  c.dataset_root = root;
  c.checkpoint_dir = ckpt;
  c.output_dir = out;
  f.get("event_threshold", c.event_threshold);
  if (c.event_threshold <= 0.0) throw ConfigError("event_threshold must be positive");
  if (auto* s = f.child("model")) c.model = model_from_json(*s);
  if (auto* s = f.child("train")) c.train = train_from_json(*s);
  if (auto* s = f.child("synthetic")) c.synthetic = synthetic_from_json(*s);
  if (auto* s = f.child("eval")) {
    Fields g(*s, "eval");
    g.get("skip", c.eval.skip);
    g.get("times", c.eval.times);
    g.get("max_samples", c.eval.max_samples);
    if (c.eval.skip < 1) throw ConfigError("eval.skip must be at least 1");
    for (double t : c.eval.times)
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("eval.times must lie in (0, 1)");
  }
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  Json j;
  try {
    j = Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return pipeline_from_json(j);
}

void apply_seed_override(PipelineConfig& c) {
  const char* s = std::getenv("IDO_SEED");
  if (!s || !*s) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("IDO_SEED is not an unsigned integer: ") + s);
  c.model.seed = v;
  c.train.seed = v;
  c.synthetic.seed = v;
}

}  // namespace ido::config
