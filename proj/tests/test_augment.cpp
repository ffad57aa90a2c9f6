#include <doctest.h>

#include <cmath>

#include "mia/augment.hpp"
#include "mia/corpus.hpp"
#include "mia/error.hpp"
#include "support.hpp"

using namespace mia;

namespace {
std::vector<double> random_window(std::uint64_t seed) {
  SeededRng rng(seed, 0);
  std::vector<double> x(kWindowLength);
  for (double& v : x) {
    v = rng.normal();
  }
  return x;
}
}  // namespace

TEST_CASE("identity config returns the input") {
  const auto x = random_window(1);
  SeededRng rng(42, 0);
  CHECK(sample_view(x, AugmentConfig::identity(), rng) == x);
}

TEST_CASE("identical rng state gives identical views, and the input is untouched") {
  const auto x = random_window(2);
  const auto copy = x;
  SeededRng a(42, 5);
  SeededRng b = a;
  const AugmentConfig cfg;
  CHECK(sample_view(x, cfg, a) == sample_view(x, cfg, b));
  CHECK(x == copy);
}

TEST_CASE("shift-only views are circular rotations") {
  const auto x = random_window(3);
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.time_shift_max = 300;
  SeededRng rng(11, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto view = sample_view(x, cfg, rng);
    std::size_t matches = 0;
    std::size_t matched_shift = 0;
    for (std::size_t s = 0; s < kWindowLength; ++s) {
      bool same = true;
      for (std::size_t i = 0; i < kWindowLength && same; ++i) {
        same = view[i] == x[(i + kWindowLength - s) % kWindowLength];
      }
      if (same) {
        ++matches;
        matched_shift = s;
      }
    }
    CHECK(matches == 1);
    const std::size_t dist = std::min(matched_shift, kWindowLength - matched_shift);
    CHECK(dist <= 300);
  }
}

TEST_CASE("default views differ across streams and stay finite") {
  const auto x = random_window(4);
  SeededRng a(42, 1);
  SeededRng b(42, 2);
  const auto va = sample_view(x, AugmentConfig{}, a);
  const auto vb = sample_view(x, AugmentConfig{}, b);
  CHECK(va.size() == kWindowLength);
  CHECK(va != vb);
  for (const double v : va) {
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("mask_prob 1 zeroes exactly one segment when nothing else changes") {
  std::vector<double> x(kWindowLength, 1.0);
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.mask_prob = 1.0;
  cfg.mask_segment_len = 250;
  SeededRng rng(3, 0);
  const auto view = sample_view(x, cfg, rng);
  CHECK(std::count(view.begin(), view.end(), 0.0) == 250);
}

TEST_CASE("config validation") {
  AugmentConfig cfg;
  CHECK_NOTHROW(cfg.validate(kWindowLength));
  cfg.scale_lo = 1.5;
  CHECK_THROWS_AS(cfg.validate(kWindowLength), ValidationError);
  cfg = {};
  cfg.time_shift_max = kWindowLength;
  CHECK_THROWS_AS(cfg.validate(kWindowLength), ValidationError);
  cfg = {};
  cfg.mask_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(kWindowLength), ValidationError);
}
