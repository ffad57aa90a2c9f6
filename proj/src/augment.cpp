#include "mia/augment.hpp"

#include <cmath>
#include <string>

#include "mia/error.hpp"

namespace mia {

AugmentConfig AugmentConfig::identity() {
  return {.scale_lo = 1.0, .scale_hi = 1.0, .time_shift_max = 0, .jitter_std = 0.0, .mask_segment_len = 0,
          .mask_prob = 0.0};
}

void AugmentConfig::validate(std::size_t window_length) const {
  auto fail = [](const std::string& field, const std::string& rule) {
    throw ValidationError("augment." + field + " " + rule);
  };
  if (!(scale_lo >= 0.0) || !(scale_hi >= scale_lo)) {
    fail("amplitude_scale_range", "must satisfy 0 <= lo <= hi");
  }
  if (time_shift_max >= window_length) {
    fail("time_shift_max", "must be smaller than the window length");
  }
  if (!(jitter_std >= 0.0) || !std::isfinite(jitter_std)) {
    fail("jitter_std", "must be finite and >= 0");
  }
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    fail("mask_prob", "must lie in [0, 1]");
  }
  if (mask_segment_len > window_length) {
    fail("mask_segment_len", "must not exceed the window length");
  }
}

std::vector<double> sample_view(std::span<const double> window, const AugmentConfig& cfg, SeededRng& rng) {
  const std::size_t n = window.size();
  std::vector<double> out(n);
  if (n == 0) {
    return out;
  }

  // Draw all randomness first, in a fixed order, so views stay reproducible.
  const auto max_shift = static_cast<std::int64_t>(cfg.time_shift_max);
  const std::int64_t shift = max_shift > 0 ? rng.uniform_int(-max_shift, max_shift) : 0;
  const double scale = cfg.scale_hi > cfg.scale_lo ? rng.uniform(cfg.scale_lo, cfg.scale_hi) : cfg.scale_lo;

  const auto len = static_cast<std::int64_t>(n);
  const std::int64_t offset = ((shift % len) + len) % len;
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = static_cast<std::size_t>((static_cast<std::int64_t>(i) - offset + len) % len);
    out[i] = window[src] * scale;
  }
  if (cfg.jitter_std > 0.0) {
    for (double& v : out) {
      v += cfg.jitter_std * rng.normal();
    }
  }
  if (cfg.mask_prob > 0.0 && cfg.mask_segment_len > 0 && rng.bernoulli(cfg.mask_prob)) {
    const auto start = static_cast<std::size_t>(rng.uniform_index(n - cfg.mask_segment_len + 1));
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(start),
              out.begin() + static_cast<std::ptrdiff_t>(start + cfg.mask_segment_len), 0.0);
  }
  return out;
}

}  // namespace mia
