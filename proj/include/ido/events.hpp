#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "ido/image.hpp"
#include "ido/tensor.hpp"

namespace ido::events {

struct EventRecord {
  int x = 0;
  int y = 0;
  int p = 1;  // -1 or +1
  double t = 0.0;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

// Time-ordered events over a closed interval of normalized time.
struct EventStream {
  double t_start = 0.0;
  double t_end = 1.0;
  std::vector<EventRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  // Sum of polarities.
  long net_polarity() const;
  // Throws InvalidInput when records are unsorted, out of interval, or have bad polarity.
  void validate(int height = -1, int width = -1) const;
};

// Bins x H x W signed polarity mass.
struct VoxelGrid {
  Tensor data;
  int bins() const { return data.channels(); }
  double total() const;
};

inline constexpr double kLogFloor = 1e-3;

// Threshold-crossing event simulator over linearly interpolated log intensity.
// Each pixel keeps a reference log level that snaps to the last emitted
// threshold, so consecutive calls on a frame sequence carry residuals forward.
class Simulator {
public:
  Simulator(const Image& first_frame, double threshold);

  // Emits events between the previous frame (time t0) and `next` (time t1).
  // Output is sorted by (t, y, x).
  std::vector<EventRecord> advance(const Image& next, double t0, double t1);

private:
  int h_, w_;
  double threshold_;
  std::vector<double> last_log_;
  std::vector<double> reference_;
};

// Events between two grayscale frames; per pixel exactly floor(|dlogL| / C).
EventStream simulate_events(const Image& frame0, const Image& frame1, double threshold, double t0 = 0.0,
                            double t1 = 1.0);

// Events at time == t go to the first part.
std::pair<EventStream, EventStream> split_stream(const EventStream& stream, double t);

// Time reversal t' = a + b - t with polarity flip.
EventStream reverse_stream(const EventStream& stream);

// Temporal bilinear binning onto `bins` centres at k / (bins - 1) of the stream interval.
VoxelGrid voxelize(const EventStream& stream, int bins, int height, int width);

// ASCII `t x y p`, one event per line.
void write_events(const std::filesystem::path& path, const EventStream& stream);
EventStream read_events(const std::filesystem::path& path);

}  // namespace ido::events
