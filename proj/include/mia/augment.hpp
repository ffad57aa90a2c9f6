#pragma once

#include <span>
#include <vector>

#include "mia/rng.hpp"

namespace mia {

/// Stochastic view family: circular time shift, amplitude scale, additive
/// Gaussian jitter, and an optional zeroed segment, applied in that order.
struct AugmentConfig {
  double scale_lo = 0.8;
  double scale_hi = 1.2;
  std::size_t time_shift_max = 125;  // samples
  double jitter_std = 0.05;
  std::size_t mask_segment_len = 250;  // samples
  double mask_prob = 0.5;

  /// All transforms disabled; sample_view returns its input unchanged.
  static AugmentConfig identity();
  /// Throws ValidationError naming the offending field.
  void validate(std::size_t window_length) const;
  bool operator==(const AugmentConfig&) const = default;
};

std::vector<double> sample_view(std::span<const double> window, const AugmentConfig& cfg, SeededRng& rng);

}  // namespace mia
