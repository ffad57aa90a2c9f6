#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mia/nn/tensor.hpp"

namespace mia {
class SeededRng;
}

namespace mia::nn {

using Gradients = std::vector<Tensor>;

/// Named parameter tensors plus their Adam state, in declaration order.
class ParamSet {
 public:
  /// Appends a parameter and returns its index.
  std::size_t add(std::string name, Tensor value);
  /// Appends a parameter drawn uniformly from [-bound, bound].
  std::size_t add_uniform(std::string name, const Shape& shape, double bound, SeededRng& rng);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& operator[](std::size_t i) { return values_[i]; }
  const Tensor& operator[](std::size_t i) const { return values_[i]; }
  std::span<const Tensor> slice(std::size_t first, std::size_t count) const;
  std::span<const Tensor> all() const { return values_; }
  std::span<Tensor> all() { return values_; }

  const std::vector<Tensor>& first_moment() const { return first_moment_; }
  const std::vector<Tensor>& second_moment() const { return second_moment_; }
  std::uint64_t step() const { return step_; }

  /// Zero gradients shaped like the parameters.
  Gradients zero_gradients() const;
  std::size_t scalar_count() const;

 private:
  friend struct AdamOptimizer;
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
  std::uint64_t step_ = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamOptimizer {
  /// One bias-corrected Adam update; increments the step count.
  static void step(ParamSet& params, const Gradients& grads, const AdamOptions& options);
};

inline void adam_step(ParamSet& params, const Gradients& grads, const AdamOptions& options) {
  AdamOptimizer::step(params, grads, options);
}

double global_norm(std::span<const Tensor> grads);

/// Rescales all gradients so their joint l2 norm is at most `threshold`.
/// Gradients already within the threshold are left untouched. Returns the
/// norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double threshold);

}  // namespace mia::nn
