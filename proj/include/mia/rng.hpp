#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mia {

/// Counter-based 64-bit generator. Each draw is a pure function of
/// (seed, stream, counter), so streams can be derived per subject, window or
/// worker without sharing state, and results do not depend on which thread
/// consumes them.
class SeededRng {
 public:
  SeededRng() : SeededRng(0, 0) {}
  SeededRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller; one value per call, no caching.
  double normal();
  bool bernoulli(double p);

  /// Fisher-Yates shuffle driven by this generator.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// `count` distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

  bool operator==(const SeededRng&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
/// Stable 64-bit hash of a string, for deriving stream ids from names.
std::uint64_t stream_id(std::string_view text);
std::uint64_t combine_streams(std::uint64_t a, std::uint64_t b);

}  // namespace mia
