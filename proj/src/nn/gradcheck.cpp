#include "mia/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mia/rng.hpp"

namespace mia::nn {

double finite_diff_check(const LossWithGrad& loss, std::vector<Tensor> params, const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  loss(params, &analytic);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      coords.emplace_back(t, i);
    }
  }
  if (options.probe_count < coords.size()) {
    SeededRng rng(options.seed, stream_id("finite_diff_check"));
    const auto picks = rng.sample_without_replacement(coords.size(), options.probe_count);
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    for (const std::size_t p : picks) {
      chosen.push_back(coords[p]);
    }
    coords = std::move(chosen);
  }

  double worst = 0.0;
  for (const auto& [t, i] : coords) {
    const double original = params[t][i];
    params[t][i] = original + options.step;
    const double up = loss(params, nullptr);
    params[t][i] = original - options.step;
    const double down = loss(params, nullptr);
    params[t][i] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[t][i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace mia::nn
