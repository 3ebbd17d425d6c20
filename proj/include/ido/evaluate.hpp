#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ido/dataset.hpp"
#include "ido/metrics.hpp"
#include "ido/pipeline.hpp"

namespace ido::eval {

// Frames predicted for every ground-truth time of one sample.
struct Prediction {
  std::vector<Image> frames;
  double tera_flops = 0.0;
  int dynamic_regions = 0;
  int total_regions = 0;
};

using Predictor = std::function<Prediction(const data::Sample&)>;

Predictor model_predictor(const Model& model, Variant variant);

// Scores `predict` on every sample; per-sample errors are recorded in the
// report's failures and skipped. Samples are visited in id order.
metrics::EvalReport evaluate(const std::vector<data::Sample>& samples, const Predictor& predict,
                             const std::string& label);

}  // namespace ido::eval
