#include "ido/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <exception>

#include "ido/error.hpp"

namespace ido::eval {

Predictor model_predictor(const Model& model, Variant variant) {
  return [&model, variant](const data::Sample& s) {
    const auto r = interpolate(model, s.i0, s.i1, s.events, s.times, variant);
    Prediction p;
    for (const auto& st : r.steps) {
      p.frames.emplace_back(st.output->value);
      p.tera_flops += metrics::count_flops(model, s.i0.height(), s.i0.width(), st.mask);
      p.dynamic_regions += st.mask.count_dynamic();
      p.total_regions += st.mask.size();
    }
    return p;
  };
}

metrics::EvalReport evaluate(const std::vector<data::Sample>& samples, const Predictor& predict,
                             const std::string& label) {
  std::vector<const data::Sample*> order;
  for (const auto& s : samples) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  metrics::EvalReport rep;
  rep.variant = label;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  long dyn = 0, total = 0;
  for (const auto* s : order) {
    try {
      const auto start = std::chrono::steady_clock::now();
      Prediction p = predict(*s);
      rep.runtime_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      require(p.frames.size() == s->targets.size(), "predictor returned the wrong number of frames");
      for (std::size_t k = 0; k < p.frames.size(); ++k) {
        psnr_sum += metrics::psnr(p.frames[k], s->targets[k]);
        ssim_sum += metrics::ssim(p.frames[k], s->targets[k]);
        ++rep.n_frames;
      }
      rep.tera_flops += p.tera_flops;
      dyn += p.dynamic_regions;
      total += p.total_regions;
      ++rep.n_samples;
    } catch (const std::exception& e) {
      rep.failures.push_back(s->id + ": " + e.what());
    }
  }
  if (rep.n_frames > 0) {
    rep.psnr_mean = psnr_sum / rep.n_frames;
    rep.ssim_mean = ssim_sum / rep.n_frames;
  }
  rep.dynamic_fraction = total > 0 ? static_cast<double>(dyn) / static_cast<double>(total) : 0.0;
  return rep;
}

}  // namespace ido::eval
