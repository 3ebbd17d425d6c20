#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ido/events.hpp"
#include "ido/image.hpp"

namespace ido::data {

// Boundary frames, the events between them, and ground truth at interior times.
struct Sample {
  std::string id;
  Image i0, i1;
  events::EventStream events;  // over [0, 1]
  std::vector<double> times;
  std::vector<Image> targets;
};

using Dataset = std::vector<Sample>;

enum class Shape { Square, Disk };

// Textured shape moving as c(t) = c0 + v t + a t^2 / 2 (pixels per frame
// interval), rotating at omega radians per interval.
struct MovingShape {
  Shape shape = Shape::Square;
  double cx = 0.0, cy = 0.0;
  double vx = 0.0, vy = 0.0;
  double ax = 0.0, ay = 0.0;
  double half_size = 6.0;
  double omega = 0.0;
  double brightness = 0.7;
  double texture_amp = 0.15;
  double texture_freq = 0.8;
  double texture_phase = 0.0;

  double x_at(double t) const { return cx + vx * t + 0.5 * ax * t * t; }
  double y_at(double t) const { return cy + vy * t + 0.5 * ay * t * t; }
};

struct Scene {
  int height = 64, width = 64;
  bool textured_background = true;
  double bg_level = 0.45;
  std::vector<double> bg_waves;  // groups of (amp, fx, fy, phase)
  std::vector<MovingShape> shapes;

  // Anti-aliased render at normalized time t (4 x 4 supersampling).
  Image render(double t) const;
};

struct SyntheticConfig {
  int count = 200;
  int height = 64, width = 64;
  std::uint64_t seed = 0;
  std::vector<double> times{0.25, 0.5, 0.75};
  double threshold = 0.2;    // event contrast threshold
  int substeps = 16;         // rendered sub-frames per interval for event simulation
  double max_speed = 6.0;    // px per interval
  double max_accel = 2.0;
  double static_fraction = 0.1;  // scenes without motion
  bool textured_background = true;
};

Scene random_scene(const SyntheticConfig& config, std::uint64_t seed);
Sample make_sample(const Scene& scene, const SyntheticConfig& config, const std::string& id);
Dataset make_synthetic_dataset(const SyntheticConfig& config);

// Renders the scene at `substeps` points and chains the event simulator.
events::EventStream simulate_scene_events(const Scene& scene, double threshold, int substeps);

// Directory layout: <root>/<seq>/im1.png ... imN.png plus events.txt.
// Frames are evenly spaced over [0, 1]; the first and last are the boundaries.
void write_sequence(const std::filesystem::path& dir, const Sample& sample);
Sample read_sequence(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root);

// Frames im1.png ... imN.png of a sequence directory.
std::vector<Image> read_frames(const std::filesystem::path& dir);
// Chains the event simulator over frames evenly spaced on [0, 1].
events::EventStream simulate_sequence_events(const std::vector<Image>& frames, double threshold);

// Skip-N view of a sequence: keeps frames 0 and N+1 as boundaries and the N
// frames between them as targets.
Sample skip_view(const Sample& sample, int skip);

}  // namespace ido::data
