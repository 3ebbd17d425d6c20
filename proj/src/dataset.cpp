#include "ido/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ido/error.hpp"

namespace ido::data {

namespace fs = std::filesystem;

namespace {

constexpr int kSuper = 4;

double shape_value(const MovingShape& s, double px, double py, double t, bool& inside) {
  const double dx = px - s.x_at(t);
  const double dy = py - s.y_at(t);
  const double th = s.omega * t;
  const double c = std::cos(th), sn = std::sin(th);
  const double lx = c * dx + sn * dy;
  const double ly = -sn * dx + c * dy;
  if (s.shape == Shape::Square)
    inside = std::abs(lx) < s.half_size && std::abs(ly) < s.half_size;
  else
    inside = lx * lx + ly * ly < s.half_size * s.half_size;
  if (!inside) return 0.0;
  return s.brightness + s.texture_amp * std::sin(s.texture_freq * lx + s.texture_phase) *
                            std::cos(s.texture_freq * 0.7 * ly);
}

}  // namespace

Image Scene::render(double t) const {
  Image img(height, width, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper;
          const double py = y + (sy + 0.5) / kSuper;
          double v = bg_level;
          if (textured_background)
            for (std::size_t k = 0; k + 3 < bg_waves.size(); k += 4)
              v += bg_waves[k] * std::sin(bg_waves[k + 1] * px + bg_waves[k + 2] * py + bg_waves[k + 3]);
          // Later shapes are drawn on top.
          for (const auto& s : shapes) {
            bool inside = false;
            const double sv = shape_value(s, px, py, t, inside);
            if (inside) v = sv;
          }
          acc += v;
        }
      img.at(y, x) = std::clamp(acc / (kSuper * kSuper), 0.0, 1.0);
    }
  return img;
}

Scene random_scene(const SyntheticConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  Scene scene;
  scene.height = config.height;
  scene.width = config.width;
  scene.textured_background = config.textured_background;
  scene.bg_level = uni(0.35, 0.55);
  for (int k = 0; k < 3; ++k) {
    const double freq = uni(0.05, 0.25);
    const double dir = uni(0.0, 2.0 * std::numbers::pi);
    scene.bg_waves.insert(scene.bg_waves.end(),
                          {uni(0.03, 0.08), freq * std::cos(dir), freq * std::sin(dir), uni(0.0, 6.28)});
  }
  const bool moving = u01(rng) >= config.static_fraction && config.max_speed > 0.0;
  const double pick = u01(rng);
  const int n_shapes = pick < 0.4 ? 1 : (pick < 0.8 ? 2 : 3);
  const double scale = std::min(config.height, config.width) / 64.0;
  for (int i = 0; i < n_shapes; ++i) {
    MovingShape s;
    s.shape = u01(rng) < 0.5 ? Shape::Square : Shape::Disk;
    s.half_size = uni(5.0, 11.0) * scale;
    const double margin = s.half_size + config.max_speed + 2.0;
    s.cx = uni(margin, config.width - margin);
    s.cy = uni(margin, config.height - margin);
    if (moving) {
      const double speed = uni(std::min(0.5, config.max_speed), config.max_speed);
      const double dir = uni(0.0, 2.0 * std::numbers::pi);
      // Start so the mid-interval position sits near the sampled centre.
      s.vx = speed * std::cos(dir);
      s.vy = speed * std::sin(dir);
      s.ax = uni(-config.max_accel, config.max_accel);
      s.ay = uni(-config.max_accel, config.max_accel);
      s.cx -= 0.5 * s.vx;
      s.cy -= 0.5 * s.vy;
      s.omega = s.shape == Shape::Square ? uni(-0.3, 0.3) : 0.0;
    }
    s.brightness = u01(rng) < 0.5 ? uni(0.75, 0.9) : uni(0.1, 0.25);
    s.texture_amp = uni(0.05, 0.1);
    s.texture_freq = uni(0.5, 1.2);
    s.texture_phase = uni(0.0, 6.28);
    scene.shapes.push_back(s);
  }
  return scene;
}

events::EventStream simulate_scene_events(const Scene& scene, double threshold, int substeps) {
  require(substeps >= 1, "substeps must be positive");
  events::EventStream stream{0.0, 1.0, {}};
  Image prev = scene.render(0.0);
  events::Simulator sim(prev, threshold);
  for (int k = 1; k <= substeps; ++k) {
    const double t0 = static_cast<double>(k - 1) / substeps;
    const double t1 = static_cast<double>(k) / substeps;
    auto evs = sim.advance(scene.render(t1), t0, t1);
    stream.records.insert(stream.records.end(), evs.begin(), evs.end());
  }
  return stream;
}

Sample make_sample(const Scene& scene, const SyntheticConfig& config, const std::string& id) {
  Sample s;
  s.id = id;
  s.i0 = scene.render(0.0);
  s.i1 = scene.render(1.0);
  s.events = simulate_scene_events(scene, config.threshold, config.substeps);
  for (double t : config.times) {
    require(t > 0.0 && t < 1.0, "synthetic ground-truth times must lie in (0, 1)");
    s.times.push_back(t);
    s.targets.push_back(scene.render(t));
  }
  return s;
}

Dataset make_synthetic_dataset(const SyntheticConfig& config) {
  require(config.count >= 1, "synthetic dataset needs at least one sample");
  require(config.height >= 8 && config.width >= 8, "synthetic frames too small");
  Dataset out;
  out.reserve(static_cast<std::size_t>(config.count));
  std::mt19937_64 seeder(config.seed);
  for (int i = 0; i < config.count; ++i) {
    const std::uint64_t scene_seed = seeder();
    char id[32];
    std::snprintf(id, sizeof id, "%05d", i);
    out.push_back(make_sample(random_scene(config, scene_seed), config, id));
  }
  return out;
}

void write_sequence(const fs::path& dir, const Sample& sample) {
  fs::create_directories(dir);
  // Only evenly spaced interior times fit the im<k> layout.
  const std::size_t n = sample.times.size();
  for (std::size_t k = 0; k < n; ++k)
    require(std::abs(sample.times[k] - static_cast<double>(k + 1) / (n + 1)) < 1e-9,
            "write_sequence: interior times must be evenly spaced");
  write_png(dir / "im1.png", sample.i0);
  for (std::size_t k = 0; k < n; ++k) write_png(dir / ("im" + std::to_string(k + 2) + ".png"), sample.targets[k]);
  write_png(dir / ("im" + std::to_string(n + 2) + ".png"), sample.i1);
  events::write_events(dir / "events.txt", sample.events);
}

std::vector<Image> read_frames(const fs::path& dir) {
  std::vector<Image> frames;
  for (int k = 1;; ++k) {
    const fs::path p = dir / ("im" + std::to_string(k) + ".png");
    if (!fs::exists(p)) break;
    frames.push_back(read_png(p));
  }
  if (frames.size() < 2) throw FormatError(dir.string() + ": needs at least im1.png and im2.png");
  for (const auto& f : frames)
    if (!f.same_shape(frames.front())) throw FormatError(dir.string() + ": frames differ in shape");
  return frames;
}

events::EventStream simulate_sequence_events(const std::vector<Image>& frames, double threshold) {
  require(frames.size() >= 2, "event simulation needs at least two frames");
  events::EventStream stream{0.0, 1.0, {}};
  events::Simulator sim(frames.front(), threshold);
  const double n = static_cast<double>(frames.size() - 1);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    auto evs = sim.advance(frames[k], (k - 1) / n, k / n);
    stream.records.insert(stream.records.end(), evs.begin(), evs.end());
  }
  return stream;
}

Sample read_sequence(const fs::path& dir) {
  const std::vector<Image> frames = read_frames(dir);
  Sample s;
  s.id = dir.filename().string();
  s.i0 = frames.front();
  s.i1 = frames.back();
  const std::size_t n = frames.size() - 2;
  for (std::size_t k = 1; k + 1 < frames.size(); ++k) {
    s.times.push_back(static_cast<double>(k) / (n + 1));
    s.targets.push_back(frames[k]);
  }
  const fs::path ev = dir / "events.txt";
  if (fs::exists(ev)) s.events = events::read_events(ev);
  s.events.validate(s.i0.height(), s.i0.width());
  return s;
}

std::vector<fs::path> list_sequences(const fs::path& root) {
  if (!fs::is_directory(root)) throw ConfigError("dataset root is not a directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "im1.png")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Sample skip_view(const Sample& sample, int skip) {
  require(skip >= 1, "skip must be at least 1");
  const int available = static_cast<int>(sample.targets.size());
  if (available == skip) return sample;
  require(available > skip, "sequence " + sample.id + " has too few frames for skip " + std::to_string(skip));
  // Rebase onto the first skip + 2 frames.
  const double t_end = sample.times[static_cast<std::size_t>(skip)];
  Sample out;
  out.id = sample.id;
  out.i0 = sample.i0;
  out.i1 = sample.targets[static_cast<std::size_t>(skip)];
  for (int k = 0; k < skip; ++k) {
    out.times.push_back(sample.times[static_cast<std::size_t>(k)] / t_end);
    out.targets.push_back(sample.targets[static_cast<std::size_t>(k)]);
  }
  out.events.t_start = 0.0;
  out.events.t_end = 1.0;
  for (const auto& r : sample.events.records)
    if (r.t <= t_end) out.events.records.push_back({r.x, r.y, r.p, std::min(r.t / t_end, 1.0)});
  return out;
}

}  // namespace ido::data
