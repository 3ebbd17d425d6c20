#include "ido/metrics.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "ido/error.hpp"

namespace ido::metrics {

double mse(const Image& a, const Image& b) {
  require(a.same_shape(b), "metrics: image shape mismatch");
  require(!a.empty(), "metrics: empty image");
  const auto& x = a.tensor().storage();
  const auto& y = b.tensor().storage();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

double psnr_from_mse(double m, double peak) {
  require(peak > 0.0 && m >= 0.0, "psnr: invalid arguments");
  if (m < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

double psnr(const Image& a, const Image& b, double peak) { return psnr_from_mse(mse(a, b), peak); }

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_1d() {
  std::vector<double> g(kWin);
  double s = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    s += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(std::span<const double> p, int h, int w, const std::vector<double>& g) {
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double a = 0.0;
      for (int k = 0; k < kWin; ++k) a += g[static_cast<std::size_t>(k)] * p[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = a;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double a = 0.0;
      for (int k = 0; k < kWin; ++k) a += g[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = a;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require(a.same_shape(b), "ssim: image shape mismatch");
  const int h = a.height(), w = a.width();
  require(h >= kWin && w >= kWin, "ssim: image smaller than the 11x11 window");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_1d();
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    auto pa = a.tensor().plane(c), pb = b.tensor().plane(c);
    std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, g), mu_b = filter_valid(pb, h, w, g);
    const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / a.channels();
}

double count_flops(const Model& model, int height, int width, const gating::BinaryMask& mask) {
  return total_flops(model.cost(height, width, mask)) / 1e12;
}

double count_flops(const ModelConfig& config, int height, int width, const gating::BinaryMask& mask) {
  return count_flops(Model(config), height, width, mask);
}

namespace {

nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["psnr_mean"] = r.psnr_mean;
  j["ssim_mean"] = r.ssim_mean;
  j["tera_flops"] = r.tera_flops;
  j["runtime_s"] = r.runtime_s;
  j["io_s"] = r.io_s;
  j["n_samples"] = r.n_samples;
  j["n_frames"] = r.n_frames;
  j["dynamic_fraction"] = r.dynamic_fraction;
  j["failures"] = r.failures;
  return j;
}

}  // namespace

std::string to_json(const EvalReport& report, int indent) { return report_json(report).dump(indent); }

std::string to_json(const std::vector<EvalReport>& reports, int indent) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  return arr.dump(indent);
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %12s %12s %8s %8s\n", "Method", "Runtime(s)", "Tera-FLOPs", "PSNR", "SSIM");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-22s %12.3f %12.6f %8.3f %8.4f\n", r.variant.c_str(), r.runtime_s, r.tera_flops,
                  r.psnr_mean, r.ssim_mean);
    out += line;
  }
  return out;
}

}  // namespace ido::metrics
