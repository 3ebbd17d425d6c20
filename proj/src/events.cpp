#include "ido/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "ido/error.hpp"

namespace ido::events {

namespace {

bool record_less(const EventRecord& a, const EventRecord& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.p < b.p;
}

double log_intensity(double v) { return std::log(std::clamp(v, kLogFloor, 1.0)); }

}  // namespace

long EventStream::net_polarity() const {
  long s = 0;
  for (const auto& r : records) s += r.p;
  return s;
}

void EventStream::validate(int height, int width) const {
  require(t_start <= t_end, "event stream interval is reversed");
  double prev = t_start;
  for (const auto& r : records) {
    require(r.p == 1 || r.p == -1, "event polarity must be -1 or +1");
    require(r.t >= t_start && r.t <= t_end, "event timestamp outside stream interval");
    require(r.t >= prev, "event stream is not sorted by time");
    require(r.x >= 0 && r.y >= 0, "negative event coordinate");
    if (width > 0) require(r.x < width, "event x outside frame");
    if (height > 0) require(r.y < height, "event y outside frame");
    prev = r.t;
  }
}

double VoxelGrid::total() const {
  double s = 0.0;
  for (double v : data.values()) s += v;
  return s;
}

Simulator::Simulator(const Image& first_frame, double threshold)
    : h_(first_frame.height()), w_(first_frame.width()), threshold_(threshold) {
  require(first_frame.channels() == 1, "event simulation expects grayscale frames");
  require(threshold > 0.0, "contrast threshold must be positive");
  last_log_.resize(static_cast<std::size_t>(h_) * w_);
  for (int y = 0; y < h_; ++y)
    for (int x = 0; x < w_; ++x) last_log_[static_cast<std::size_t>(y) * w_ + x] = log_intensity(first_frame.at(y, x));
  reference_ = last_log_;
}

std::vector<EventRecord> Simulator::advance(const Image& next, double t0, double t1) {
  require(next.channels() == 1, "event simulation expects grayscale frames");
  require(next.height() == h_ && next.width() == w_, "frame shape mismatch in event simulation");
  require(t0 < t1, "event simulation requires t0 < t1");
  std::vector<EventRecord> out;
  const double dt = t1 - t0;
  for (int y = 0; y < h_; ++y)
    for (int x = 0; x < w_; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w_ + x;
      const double l0 = last_log_[i];
      const double l1 = log_intensity(next.at(y, x));
      const double delta = l1 - l0;
      last_log_[i] = l1;
      if (delta == 0.0) continue;
      const int sign = delta > 0.0 ? 1 : -1;
      // Crossings of reference + k * C along the segment l0 -> l1.
      const double ref = reference_[i];
      const double offset = (l0 - ref) * sign;  // progress already made past the reference
      const double reach = offset + std::abs(delta);
      const auto count = static_cast<long>(std::floor(reach / threshold_));
      if (count <= 0) continue;
      for (long k = 1; k <= count; ++k) {
        const double tau = (k * threshold_ - offset) / std::abs(delta);
        out.push_back({x, y, sign, t0 + std::clamp(tau, 0.0, 1.0) * dt});
      }
      reference_[i] = ref + sign * count * threshold_;
    }
  std::sort(out.begin(), out.end(), record_less);
  return out;
}

EventStream simulate_events(const Image& frame0, const Image& frame1, double threshold, double t0, double t1) {
  require(frame0.same_shape(frame1), "simulate_events: frame shape mismatch");
  require(threshold > 0.0, "simulate_events: threshold must be positive");
  require(t0 < t1, "simulate_events: requires t0 < t1");
  Simulator sim(frame0, threshold);
  return {t0, t1, sim.advance(frame1, t0, t1)};
}

std::pair<EventStream, EventStream> split_stream(const EventStream& stream, double t) {
  require(t >= stream.t_start && t <= stream.t_end, "split_stream: split time outside stream interval");
  auto mid = std::upper_bound(stream.records.begin(), stream.records.end(), t,
                              [](double v, const EventRecord& r) { return v < r.t; });
  EventStream first{stream.t_start, t, {stream.records.begin(), mid}};
  EventStream second{t, stream.t_end, {mid, stream.records.end()}};
  return {std::move(first), std::move(second)};
}

EventStream reverse_stream(const EventStream& stream) {
  EventStream out{stream.t_start, stream.t_end, {}};
  out.records.reserve(stream.records.size());
  const double span = stream.t_start + stream.t_end;
  for (auto it = stream.records.rbegin(); it != stream.records.rend(); ++it)
    out.records.push_back({it->x, it->y, -it->p, std::clamp(span - it->t, stream.t_start, stream.t_end)});
  std::stable_sort(out.records.begin(), out.records.end(), record_less);
  return out;
}

VoxelGrid voxelize(const EventStream& stream, int bins, int height, int width) {
  require(bins >= 2, "voxelize: at least two bins required");
  require(height > 0 && width > 0, "voxelize: empty frame");
  VoxelGrid grid{Tensor({bins, height, width})};
  const double span = stream.t_end - stream.t_start;
  for (const auto& r : stream.records) {
    require(r.x >= 0 && r.x < width && r.y >= 0 && r.y < height, "voxelize: event outside frame");
    require(r.t >= stream.t_start && r.t <= stream.t_end, "voxelize: event outside stream interval");
    const double tau = span > 0.0 ? (r.t - stream.t_start) / span : 0.0;
    const double pos = tau * (bins - 1);
    int k = static_cast<int>(std::floor(pos));
    k = std::clamp(k, 0, bins - 1);
    const double frac = pos - k;
    grid.data.at(k, r.y, r.x) += r.p * (1.0 - frac);
    if (frac > 0.0 && k + 1 < bins) grid.data.at(k + 1, r.y, r.x) += r.p * frac;
  }
  return grid;
}

void write_events(const std::filesystem::path& path, const EventStream& stream) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  char buf[96];
  for (const auto& r : stream.records) {
    const int n = std::snprintf(buf, sizeof buf, "%.9f %d %d %d\n", r.t, r.x, r.y, r.p);
    os.write(buf, n);
  }
  if (!os) throw FormatError("write failed: " + path.string());
}

EventStream read_events(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  EventStream s{0.0, 1.0, {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    EventRecord r;
    if (!(ls >> r.t >> r.x >> r.y >> r.p) || (r.p != 1 && r.p != -1) || r.t < 0.0 || r.t > 1.0)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed event record");
    s.records.push_back(r);
  }
  std::stable_sort(s.records.begin(), s.records.end(), record_less);
  return s;
}

}  // namespace ido::events
