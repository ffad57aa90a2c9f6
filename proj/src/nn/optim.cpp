#include "mia/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "mia/error.hpp"
#include "mia/rng.hpp"

namespace mia::nn {

std::size_t ParamSet::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  first_moment_.push_back(Tensor::zeros_like(value));
  second_moment_.push_back(Tensor::zeros_like(value));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParamSet::add_uniform(std::string name, const Shape& shape, double bound, SeededRng& rng) {
  Tensor value(shape);
  for (double& v : value.values()) {
    v = rng.uniform(-bound, bound);
  }
  return add(std::move(name), std::move(value));
}

std::span<const Tensor> ParamSet::slice(std::size_t first, std::size_t count) const {
  if (first + count > values_.size()) {
    throw std::out_of_range("ParamSet::slice out of range");
  }
  return std::span<const Tensor>(values_).subspan(first, count);
}

Gradients ParamSet::zero_gradients() const {
  Gradients grads;
  grads.reserve(values_.size());
  for (const Tensor& v : values_) {
    grads.push_back(Tensor::zeros_like(v));
  }
  return grads;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t total = 0;
  for (const Tensor& v : values_) {
    total += v.size();
  }
  return total;
}

void AdamOptimizer::step(ParamSet& params, const Gradients& grads, const AdamOptions& options) {
  if (grads.size() != params.values_.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.values_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.values_[i].shape()) {
      throw ShapeError("adam_step: gradient for '" + params.names_[i] + "' has shape " +
                       shape_string(grads[i].shape()) + ", parameter is " +
                       shape_string(params.values_[i].shape()));
    }
  }
  ++params.step_;
  const double t = static_cast<double>(params.step_);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    double* value = params.values_[i].data();
    double* m = params.first_moment_[i].data();
    double* v = params.second_moment_[i].data();
    const double* g = grads[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g[j];
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

double global_norm(std::span<const Tensor> grads) {
  double total = 0.0;
  for (const Tensor& g : grads) {
    total += g.squared_norm();
  }
  return std::sqrt(total);
}

double clip_global_norm(std::span<Tensor> grads, double threshold) {
  if (!(threshold > 0.0)) {
    throw std::invalid_argument("clip_global_norm: threshold must be positive");
  }
  const double norm = global_norm(grads);
  // Rescaled gradients land within rounding of the threshold; the slack keeps
  // a second clip from touching them again.
  if (norm <= threshold * (1.0 + 1e-12)) {
    return norm;
  }
  const double scale = threshold / norm;
  for (Tensor& g : grads) {
    g *= scale;
  }
  return norm;
}

}  // namespace mia::nn
