#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mia/nn/tensor.hpp"

namespace mia::nn {

/// Loss over a list of tensors. When `grads` is non-null it must be filled
/// with the analytic gradient, one tensor per input.
using LossWithGrad = std::function<double(std::span<const Tensor> params, std::vector<Tensor>* grads)>;

struct GradCheckOptions {
  std::size_t probe_count = 32;
  double step = 1e-5;
  /// Denominator floor so coordinates with ~0 gradient compare absolutely.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

/// Compares the analytic gradient with central differences on randomly
/// chosen coordinates (all coordinates when probe_count covers them) and
/// returns the largest relative error |a - n| / max(|a|, |n|, abs_floor).
double finite_diff_check(const LossWithGrad& loss, std::vector<Tensor> params, const GradCheckOptions& options = {});

}  // namespace mia::nn
