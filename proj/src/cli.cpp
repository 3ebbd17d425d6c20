#include "ido/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ido/checkpoint.hpp"
#include "ido/config.hpp"
#include "ido/error.hpp"
#include "ido/evaluate.hpp"
#include "ido/metrics.hpp"
#include "ido/training.hpp"

namespace ido::cli {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%.4f", t);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

struct Options {
  std::string config_path;
  // make-synthetic
  std::string out_dir;
  std::optional<int> count, skip, height, width;
  std::optional<std::uint64_t> seed;
  // simulate-events
  std::optional<double> threshold;
  // shared
  std::string root, checkpoints, json_path;
  // train
  std::string stage, log_path;
  bool synthetic = false;
  // interpolate
  std::string seq, i0, i1, events_path;
  std::vector<double> times;
  bool intermediates = false;
  std::string variant = "gated";
  // evaluate
  std::vector<std::string> variants;
  std::optional<int> max_samples;
};

config::PipelineConfig load_config(const Options& o) {
  config::PipelineConfig c = o.config_path.empty() ? config::PipelineConfig{} : config::load_pipeline_config(o.config_path);
  config::apply_seed_override(c);
  if (!o.root.empty()) c.dataset_root = o.root;
  if (!o.checkpoints.empty()) c.checkpoint_dir = o.checkpoints;
  return c;
}

int cmd_make_synthetic(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  data::SyntheticConfig sc = c.synthetic;
  if (o.count) sc.count = *o.count;
  if (o.seed) sc.seed = *o.seed;
  if (o.height) sc.height = *o.height;
  if (o.width) sc.width = *o.width;
  if (o.skip) {
    if (*o.skip < 1) throw ConfigError("--skip must be at least 1");
    sc.times.clear();
    for (int k = 1; k <= *o.skip; ++k) sc.times.push_back(static_cast<double>(k) / (*o.skip + 1));
  }
  const fs::path dir = o.out_dir.empty() ? c.dataset_root : fs::path(o.out_dir);
  const auto samples = data::make_synthetic_dataset(sc);
  for (const auto& s : samples) data::write_sequence(dir / s.id, s);
  out << "wrote " << samples.size() << " sequences to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_simulate_events(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = load_config(o);
  const double threshold = o.threshold.value_or(c.event_threshold);
  if (!(threshold > 0.0)) throw ConfigError("threshold must be positive");
  const auto seqs = data::list_sequences(c.dataset_root);
  if (seqs.empty()) {
    err << "warning: no sequences found under " << c.dataset_root.string() << "\n";
    return kExitOk;
  }
  int written = 0;
  std::vector<std::string> failures;
  for (const auto& dir : seqs) {
    try {
      const auto stream = data::simulate_sequence_events(data::read_frames(dir), threshold);
      events::write_events(dir / "events.txt", stream);
      ++written;
    } catch (const std::exception& e) {
      failures.push_back(dir.filename().string() + ": " + e.what());
    }
  }
  out << "wrote " << written << " event files\n";
  for (const auto& f : failures) err << "failed: " << f << "\n";
  return failures.empty() ? kExitOk : kExitFailure;
}

data::Dataset load_dataset(const config::PipelineConfig& c, bool synthetic) {
  if (synthetic) return data::make_synthetic_dataset(c.synthetic);
  data::Dataset out;
  for (const auto& dir : data::list_sequences(c.dataset_root)) out.push_back(data::read_sequence(dir));
  if (out.empty()) throw ConfigError("no sequences under " + c.dataset_root.string());
  return out;
}

int cmd_train(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  const Stage stage = parse_stage(o.stage);
  const auto data = load_dataset(c, o.synthetic);
  const fs::path log_path =
      o.log_path.empty() ? c.checkpoint_dir / ("train_" + std::string(stage_name(stage)) + ".jsonl") : fs::path(o.log_path);
  fs::create_directories(c.checkpoint_dir);
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw ConfigError("cannot write " + log_path.string());
  const auto logs = training::staged_train(c.model, c.train, data, stage, c.checkpoint_dir, &log);
  out << "stage " << stage_name(stage) << ": " << logs.size() << " steps";
  if (!logs.empty()) out << ", final loss " << logs.back().loss;
  out << "\ncheckpoint " << training::checkpoint_path(c.checkpoint_dir, stage).string() << "\n";
  return kExitOk;
}

int cmd_interpolate(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  const Variant variant = parse_variant(o.variant);
  const Model model = training::load_model(c.checkpoint_dir);
  Image i0, i1;
  events::EventStream stream;
  if (!o.seq.empty()) {
    const auto s = data::read_sequence(o.seq);
    i0 = s.i0;
    i1 = s.i1;
    stream = s.events;
  } else {
    if (o.i0.empty() || o.i1.empty()) throw ConfigError("interpolate needs --seq or both --i0 and --i1");
    i0 = read_png(o.i0);
    i1 = read_png(o.i1);
    if (!o.events_path.empty()) stream = events::read_events(o.events_path);
    stream.validate(i0.height(), i0.width());
  }
  const auto times = o.times.empty() ? c.eval.times : o.times;
  for (double t : times)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("--t values must lie in (0, 1)");
  const fs::path dir = o.out_dir.empty() ? c.output_dir : fs::path(o.out_dir);
  fs::create_directories(dir);
  const auto result = interpolate(model, i0, i1, stream, times, variant);
  for (const auto& st : result.steps) {
    const std::string tag = time_tag(st.t);
    write_png(dir / ("frame_" + tag + ".png"), Image(st.output->value));
    out << (dir / ("frame_" + tag + ".png")).string() << "\n";
    if (o.intermediates) {
      write_png(dir / ("warp0_" + tag + ".png"), Image(st.i0_warp->value));
      write_png(dir / ("warp1_" + tag + ".png"), Image(st.i1_warp->value));
      write_png(dir / ("refine0_" + tag + ".png"), Image(st.refined_frames->i0t->value));
      write_png(dir / ("refine1_" + tag + ".png"), Image(st.refined_frames->i1t->value));
    }
  }
  out << "compute " << result.compute_seconds << " s\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = load_config(o);
  const int skip = o.skip.value_or(c.eval.skip);
  if (skip < 1) throw ConfigError("--skip must be at least 1");
  std::vector<Variant> variants;
  for (const auto& v : o.variants) variants.push_back(parse_variant(v));
  if (variants.empty()) variants = {Variant::NoRefinement, Variant::AllRegions, Variant::Gated};
  const Model model = training::load_model(c.checkpoint_dir);

  const auto io_start = std::chrono::steady_clock::now();
  std::vector<data::Sample> samples;
  std::vector<std::string> load_failures;
  const int limit = o.max_samples.value_or(c.eval.max_samples);
  for (const auto& dir : data::list_sequences(c.dataset_root)) {
    if (limit > 0 && static_cast<int>(samples.size()) >= limit) break;
    try {
      samples.push_back(data::skip_view(data::read_sequence(dir), skip));
    } catch (const std::exception& e) {
      load_failures.push_back(dir.filename().string() + ": " + e.what());
    }
  }
  const double io_s = seconds_since(io_start);
  if (samples.empty() && load_failures.empty()) throw ConfigError("no sequences under " + c.dataset_root.string());

  std::vector<metrics::EvalReport> reports;
  for (Variant v : variants) {
    auto rep = eval::evaluate(samples, eval::model_predictor(model, v), std::string(variant_label(v)));
    rep.io_s = io_s;
    rep.failures.insert(rep.failures.begin(), load_failures.begin(), load_failures.end());
    reports.push_back(std::move(rep));
  }
  out << "skip " << skip << ", " << samples.size() << " sequences\n" << metrics::format_table(reports);
  const fs::path json = o.json_path.empty() ? c.output_dir / ("eval_skip" + std::to_string(skip) + ".json") : fs::path(o.json_path);
  write_text(json, metrics::to_json(reports) + "\n");
  out << "report " << json.string() << "\n";
  bool failed = false;
  for (const auto& r : reports)
    for (const auto& f : r.failures) {
      err << "failed: " << f << "\n";
      failed = true;
    }
  return failed ? kExitFailure : kExitOk;
}

int cmd_flops_report(const Options& o, std::ostream& out) {
  auto c = load_config(o);
  const int h = o.height.value_or(c.synthetic.height), w = o.width.value_or(c.synthetic.width);
  const Model model(c.model);
  model.check_input_size(h, w);
  const int n = model.residual.regions();
  const double flow = metrics::total_flops(model.flow.cost(h, w));
  const double gate = metrics::total_flops(model.gate.cost(h, w));
  const double fusion = metrics::total_flops(model.fusion.cost(h, w));
  const double region = model.residual.region_flops(h, w);
  const double attention = model.residual.attention_flops(h, w);
  const double none = metrics::count_flops(model, h, w, gating::BinaryMask::all_static(n));
  const double all = metrics::count_flops(model, h, w, gating::BinaryMask::all_dynamic(n));
  char line[128];
  out << "frame " << h << "x" << w << ", " << n << " regions\n";
  for (auto [name, v] : {std::pair{"flow", flow}, {"gate", gate}, {"fusion", fusion}, {"residual/region", region},
                         {"residual/attention", attention}}) {
    std::snprintf(line, sizeof line, "%-20s %14.0f FLOPs\n", name, v);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-20s %14.9f TFLOPs\n%-20s %14.9f TFLOPs\n", "all-static", none, "all-dynamic", all);
  out << line;
  if (!o.json_path.empty()) {
    const config::Json j{{"height", h},         {"width", w},
                         {"regions", n},        {"flow_flops", flow},
                         {"gate_flops", gate},  {"fusion_flops", fusion},
                         {"region_flops", region}, {"attention_flops", attention},
                         {"tera_flops_all_static", none}, {"tera_flops_all_dynamic", all}};
    write_text(o.json_path, j.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-guided video frame interpolation with gated region refinement", "ido_vfi"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);

  auto* mk = app.add_subcommand("make-synthetic", "Render a synthetic dataset in the sequence layout");
  mk->add_option("--out", o.out_dir, "Output root (default: dataset_root)");
  mk->add_option("--count", o.count, "Number of sequences");
  mk->add_option("--seed", o.seed, "Scene seed");
  mk->add_option("--skip", o.skip, "Interior frames per sequence");
  mk->add_option("--height", o.height);
  mk->add_option("--width", o.width);

  auto* sim = app.add_subcommand("simulate-events", "Write events.txt for every sequence under the dataset root");
  sim->add_option("--root", o.root, "Dataset root");
  sim->add_option("--threshold", o.threshold, "Contrast threshold C");

  auto* tr = app.add_subcommand("train", "Train one stage; earlier stages are loaded frozen");
  tr->add_option("--stage", o.stage, "flow, gate, residual or fusion")
      ->required()
      ->check(CLI::IsMember({"flow", "gate", "residual", "fusion"}));
  tr->add_option("--root", o.root, "Dataset root");
  tr->add_option("--checkpoints", o.checkpoints, "Checkpoint directory");
  tr->add_option("--log", o.log_path, "JSON-lines training log");
  tr->add_flag("--synthetic", o.synthetic, "Generate the training set in memory from the synthetic config");

  auto* in = app.add_subcommand("interpolate", "Synthesize frames at the requested times");
  in->add_option("--checkpoints", o.checkpoints, "Checkpoint directory");
  in->add_option("--seq", o.seq, "Sequence directory (first and last frames are used)");
  in->add_option("--i0", o.i0, "First boundary frame");
  in->add_option("--i1", o.i1, "Second boundary frame");
  in->add_option("--events", o.events_path, "Event file for the interval");
  in->add_option("--t", o.times, "Target times in (0, 1)")->delimiter(',');
  in->add_option("--out", o.out_dir, "Output directory");
  in->add_option("--variant", o.variant, "gated, all or none")->check(CLI::IsMember({"gated", "all", "none"}));
  in->add_flag("--intermediates", o.intermediates, "Also write warped and refined frames");

  auto* ev = app.add_subcommand("evaluate", "Skip-N evaluation with a runtime, FLOPs, PSNR and SSIM report");
  ev->add_option("--checkpoints", o.checkpoints, "Checkpoint directory");
  ev->add_option("--root", o.root, "Dataset root");
  ev->add_option("--skip", o.skip, "Frames withheld between kept frames");
  ev->add_option("--variant", o.variants, "gated, all or none (repeatable)")
      ->check(CLI::IsMember({"gated", "all", "none"}));
  ev->add_option("--json", o.json_path, "Report path");
  ev->add_option("--max-samples", o.max_samples, "Evaluate at most this many sequences");

  auto* fl = app.add_subcommand("flops-report", "Analytic per-network cost for the configured model");
  fl->add_option("--height", o.height);
  fl->add_option("--width", o.width);
  fl->add_option("--json", o.json_path, "Also write the report as JSON");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (mk->parsed()) return cmd_make_synthetic(o, out);
    if (sim->parsed()) return cmd_simulate_events(o, out, err);
    if (tr->parsed()) return cmd_train(o, out);
    if (in->parsed()) return cmd_interpolate(o, out);
    if (ev->parsed()) return cmd_evaluate(o, out, err);
    if (fl->parsed()) return cmd_flops_report(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DependencyError& e) {
    err << "dependency error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ido::cli
