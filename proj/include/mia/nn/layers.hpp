#pragma once

#include <span>
#include <string>
#include <vector>

#include "mia/nn/tensor.hpp"

namespace mia::nn {

enum class LayerKind { conv1d, linear, relu, maxpool1d, avgpool1d, layernorm, attention, patch_embed };

const char* to_string(LayerKind kind);

/// Static description of one layer. Shape rules per kind:
///   conv1d      (B, in, L)  -> (B, out, floor((L - kernel) / stride) + 1)
///   linear      (..., in)   -> (..., out)
///   relu        any         -> same
///   maxpool1d   (B, C, L)   -> (B, C, floor((L - kernel) / stride) + 1)
///   avgpool1d   (B, C, L)   -> same rule; kernel == 0 means global mean -> (B, C)
///   layernorm   (..., in)   -> same, normalized over the last axis
///   attention   (B, T, in)  -> (B, T, in), single-head scaled dot-product
///   patch_embed (B, 1, L)   -> (B, L / patch_len, out)
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t patch_len = 0;

  static LayerSpec conv1d(std::string name, std::size_t in, std::size_t out, std::size_t kernel,
                          std::size_t stride);
  static LayerSpec linear(std::string name, std::size_t in, std::size_t out);
  static LayerSpec relu(std::string name = "relu");
  static LayerSpec maxpool1d(std::string name, std::size_t kernel, std::size_t stride);
  static LayerSpec avgpool1d(std::string name, std::size_t kernel, std::size_t stride);
  static LayerSpec global_avgpool(std::string name = "gap");
  static LayerSpec layernorm(std::string name, std::size_t dim);
  static LayerSpec attention(std::string name, std::size_t dim);
  static LayerSpec patch_embed(std::string name, std::size_t patch_len, std::size_t dim);

  /// Throws std::invalid_argument on strides, kernels or channel counts < 1.
  void validate() const;
  /// Parameter shapes in declaration order (empty for parameter-free layers).
  std::vector<Shape> param_shapes() const;
  /// Fan-in used by the uniform initializer for parameter `index`.
  std::size_t fan_in(std::size_t index) const;
  Shape output_shape(const Shape& input) const;
};

struct LayerGrad {
  Tensor input;
  std::vector<Tensor> params;
};

Tensor layer_forward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input);

/// Gradients of a scalar loss with respect to the layer input and parameters,
/// given the gradient at the layer output. Intermediates are recomputed from
/// `input`, so no forward state is carried between calls.
LayerGrad layer_backward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input,
                         const Tensor& grad_out);

/// Cosine similarity; 0 when either vector has norm below 1e-12.
double cosine_sim(std::span<const double> a, std::span<const double> b);

}  // namespace mia::nn
