#pragma once

#include <string>
#include <vector>

#include "ido/flops.hpp"
#include "ido/image.hpp"
#include "ido/pipeline.hpp"

namespace ido::metrics {

inline constexpr double kPsnrCap = 100.0;

double mse(const Image& a, const Image& b);
// 10 log10(peak^2 / MSE), capped at 100 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

// Gaussian-window SSIM (11 x 11, sigma 1.5, K1 0.01, K2 0.03, range 1) over
// valid window positions, per channel then averaged.
double ssim(const Image& a, const Image& b);

// Analytic cost of one interpolated frame in tera-FLOPs; the residual module
// is counted only for dynamic regions of `mask`.
double count_flops(const Model& model, int height, int width, const gating::BinaryMask& mask);
double count_flops(const ModelConfig& config, int height, int width, const gating::BinaryMask& mask);

struct EvalReport {
  std::string variant;  // row label
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  double tera_flops = 0.0;  // summed over all interpolated frames
  double runtime_s = 0.0;   // compute time
  double io_s = 0.0;        // loading and writing time
  int n_samples = 0;
  int n_frames = 0;
  double dynamic_fraction = 0.0;
  std::vector<std::string> failures;  // per-sample errors
};

std::string to_json(const EvalReport& report, int indent = 2);
std::string to_json(const std::vector<EvalReport>& reports, int indent = 2);
// Runtime(s) | Tera-FLOPs | PSNR | SSIM, one row per report.
std::string format_table(const std::vector<EvalReport>& reports);

}  // namespace ido::metrics
