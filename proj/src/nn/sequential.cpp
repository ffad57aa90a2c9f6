#include "mia/nn/sequential.hpp"

#include <cmath>
#include <stdexcept>

#include "mia/rng.hpp"

namespace mia::nn {

Sequential::Sequential(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  for (const LayerSpec& layer : layers_) {
    layer.validate();
  }
}

void Sequential::register_params(ParamSet& params, SeededRng& rng) {
  first_param_ = params.size();
  offsets_.clear();
  counts_.clear();
  for (const LayerSpec& layer : layers_) {
    offsets_.push_back(params.size());
    const auto shapes = layer.param_shapes();
    counts_.push_back(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const std::string name = layer.name + "." + std::to_string(i);
      if (layer.kind == LayerKind::layernorm) {
        params.add(name, Tensor(shapes[i], i == 0 ? 1.0 : 0.0));
      } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.fan_in(i)));
        params.add_uniform(name, shapes[i], bound, rng);
      }
    }
  }
  param_count_ = params.size() - first_param_;
}

Tensor Sequential::forward(const ParamSet& params, const Tensor& input, std::vector<Tensor>* trace) const {
  if (offsets_.size() != layers_.size()) {
    throw std::logic_error("Sequential used before register_params");
  }
  if (trace != nullptr) {
    trace->clear();
    trace->reserve(layers_.size());
  }
  Tensor current = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto slice = params.slice(offsets_[i], counts_[i]);
    Tensor next = layer_forward(layers_[i], slice, current);
    if (trace != nullptr) {
      trace->push_back(std::move(current));
    }
    current = std::move(next);
  }
  return current;
}

Tensor Sequential::backward(const ParamSet& params, const std::vector<Tensor>& trace, const Tensor& grad_out,
                            Gradients& grads) const {
  if (trace.size() != layers_.size()) {
    throw std::logic_error("Sequential::backward: trace does not match layer count");
  }
  Tensor grad = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const std::size_t count = counts_[i];
    LayerGrad step = layer_backward(layers_[i], params.slice(offsets_[i], count), trace[i], grad);
    for (std::size_t p = 0; p < count; ++p) {
      grads[offsets_[i] + p] += step.params[p];
    }
    grad = std::move(step.input);
  }
  return grad;
}

Shape Sequential::output_shape(Shape input) const {
  for (const LayerSpec& layer : layers_) {
    input = layer.output_shape(input);
  }
  return input;
}

}  // namespace mia::nn
