#pragma once

#include <vector>

#include "mia/nn/layers.hpp"
#include "mia/nn/optim.hpp"

namespace mia::nn {

/// Chain of layers whose parameters live in a shared ParamSet.
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerSpec> layers);

  /// Appends this chain's parameters to `params` with uniform
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization (layernorm: gamma 1, beta 0).
  void register_params(ParamSet& params, SeededRng& rng);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t param_begin() const { return first_param_; }
  std::size_t param_count() const { return param_count_; }

  /// Runs the chain. When `trace` is given it receives each layer's input,
  /// which is what backward() needs.
  Tensor forward(const ParamSet& params, const Tensor& input, std::vector<Tensor>* trace = nullptr) const;

  /// Backpropagates through the chain, accumulating parameter gradients into
  /// `grads` (indexed like the ParamSet). Returns the gradient at the input.
  Tensor backward(const ParamSet& params, const std::vector<Tensor>& trace, const Tensor& grad_out,
                  Gradients& grads) const;

  Shape output_shape(Shape input) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> counts_;
  std::size_t first_param_ = 0;
  std::size_t param_count_ = 0;
};

}  // namespace mia::nn
