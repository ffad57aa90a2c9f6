#include "mia/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mia/error.hpp"
#include "mia/log.hpp"

namespace mia::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;

[[noreturn]] void shape_mismatch(const LayerSpec& layer, const std::string& expected, const Shape& got) {
  throw ShapeError(std::string(to_string(layer.kind)) + " layer '" + layer.name + "' expects input " +
                   expected + ", got " + shape_string(got));
}

void expect_params(const LayerSpec& layer, std::span<const Tensor> params) {
  const auto shapes = layer.param_shapes();
  if (params.size() != shapes.size()) {
    throw ShapeError(std::string(to_string(layer.kind)) + " layer '" + layer.name + "' needs " +
                     std::to_string(shapes.size()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].shape() != shapes[i]) {
      throw ShapeError(std::string(to_string(layer.kind)) + " layer '" + layer.name + "' parameter " +
                       std::to_string(i) + " should be " + shape_string(shapes[i]) + ", got " +
                       shape_string(params[i].shape()));
    }
  }
}

std::size_t pooled_length(const LayerSpec& layer, std::size_t length) {
  if (length < layer.kernel) {
    throw ShapeError(std::string(to_string(layer.kind)) + " layer '" + layer.name + "' needs length >= " +
                     std::to_string(layer.kernel) + ", got " + std::to_string(length));
  }
  return (length - layer.kernel) / layer.stride + 1;
}

// Four independent partial sums so the compiler can vectorize the reduction.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) {
    s0 += a[i] * b[i];
  }
  return (s0 + s1) + (s2 + s3);
}

// ---- conv1d ---------------------------------------------------------------

// Unfolds one sample into columns: cols[(ci * K + k) * out_len + t] = x[ci][t * stride + k].
void unfold(const LayerSpec& layer, const double* x, std::size_t length, std::size_t out_len, double* cols) {
  for (std::size_t ci = 0; ci < layer.in; ++ci) {
    for (std::size_t k = 0; k < layer.kernel; ++k) {
      const double* src = x + ci * length + k;
      double* dst = cols + (ci * layer.kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        dst[t] = src[t * layer.stride];
      }
    }
  }
}

Tensor conv1d_forward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input) {
  if (input.rank() != 3 || input.dim(1) != layer.in) {
    shape_mismatch(layer, "(B, " + std::to_string(layer.in) + ", L)", input.shape());
  }
  const std::size_t batch = input.dim(0);
  const std::size_t length = input.dim(2);
  const std::size_t out_len = pooled_length(layer, length);
  const std::size_t taps = layer.in * layer.kernel;
  const Tensor& weight = params[0];
  const Tensor& bias = params[1];

  Tensor out({batch, layer.out, out_len});
  std::vector<double> cols(taps * out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    unfold(layer, input.data() + b * layer.in * length, length, out_len, cols.data());
    for (std::size_t co = 0; co < layer.out; ++co) {
      double* row = out.data() + (b * layer.out + co) * out_len;
      std::fill(row, row + out_len, bias[co]);
      const double* w = weight.data() + co * taps;
      for (std::size_t j = 0; j < taps; ++j) {
        const double wj = w[j];
        const double* c = cols.data() + j * out_len;
        for (std::size_t t = 0; t < out_len; ++t) {
          row[t] += wj * c[t];
        }
      }
    }
  }
  return out;
}

LayerGrad conv1d_backward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input,
                          const Tensor& grad_out) {
  const std::size_t batch = input.dim(0);
  const std::size_t length = input.dim(2);
  const std::size_t out_len = grad_out.dim(2);
  const std::size_t taps = layer.in * layer.kernel;
  const Tensor& weight = params[0];

  LayerGrad grad{Tensor::zeros_like(input), {Tensor::zeros_like(params[0]), Tensor::zeros_like(params[1])}};
  Tensor& g_weight = grad.params[0];
  Tensor& g_bias = grad.params[1];
  std::vector<double> cols(taps * out_len);
  std::vector<double> g_cols(taps * out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    unfold(layer, input.data() + b * layer.in * length, length, out_len, cols.data());
    std::fill(g_cols.begin(), g_cols.end(), 0.0);
    for (std::size_t co = 0; co < layer.out; ++co) {
      const double* g = grad_out.data() + (b * layer.out + co) * out_len;
      double bias_sum = 0.0;
      for (std::size_t t = 0; t < out_len; ++t) {
        bias_sum += g[t];
      }
      g_bias[co] += bias_sum;
      const double* w = weight.data() + co * taps;
      double* gw = g_weight.data() + co * taps;
      for (std::size_t j = 0; j < taps; ++j) {
        const double* c = cols.data() + j * out_len;
        double* gc = g_cols.data() + j * out_len;
        const double wj = w[j];
        for (std::size_t t = 0; t < out_len; ++t) {
          gc[t] += wj * g[t];
        }
        gw[j] += dot(g, c, out_len);
      }
    }
    double* gx = grad.input.data() + b * layer.in * length;
    for (std::size_t ci = 0; ci < layer.in; ++ci) {
      for (std::size_t k = 0; k < layer.kernel; ++k) {
        const double* gc = g_cols.data() + (ci * layer.kernel + k) * out_len;
        double* dst = gx + ci * length + k;
        for (std::size_t t = 0; t < out_len; ++t) {
          dst[t * layer.stride] += gc[t];
        }
      }
    }
  }
  return grad;
}

// ---- linear ----------------------------------------------------------------

Tensor linear_forward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input) {
  if (input.rank() == 0 || input.shape().back() != layer.in) {
    shape_mismatch(layer, "(..., " + std::to_string(layer.in) + ")", input.shape());
  }
  const std::size_t rows = input.size() / layer.in;
  Shape shape = input.shape();
  shape.back() = layer.out;
  Tensor out(std::move(shape));
  const Tensor& weight = params[0];
  const Tensor& bias = params[1];
  for (std::size_t n = 0; n < rows; ++n) {
    const double* x = input.data() + n * layer.in;
    double* y = out.data() + n * layer.out;
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = weight.data() + o * layer.in;
      y[o] = bias[o] + dot(w, x, layer.in);
    }
  }
  return out;
}

LayerGrad linear_backward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input,
                          const Tensor& grad_out) {
  const std::size_t rows = input.size() / layer.in;
  const Tensor& weight = params[0];
  LayerGrad grad{Tensor::zeros_like(input), {Tensor::zeros_like(params[0]), Tensor::zeros_like(params[1])}};
  for (std::size_t n = 0; n < rows; ++n) {
    const double* x = input.data() + n * layer.in;
    const double* g = grad_out.data() + n * layer.out;
    double* gx = grad.input.data() + n * layer.in;
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double go = g[o];
      if (go == 0.0) {
        continue;
      }
      const double* w = weight.data() + o * layer.in;
      double* gw = grad.params[0].data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        gx[i] += go * w[i];
        gw[i] += go * x[i];
      }
      grad.params[1][o] += go;
    }
  }
  return grad;
}

// ---- relu ------------------------------------------------------------------

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) {
    v = v > 0.0 ? v : 0.0;
  }
  return out;
}

LayerGrad relu_backward(const Tensor& input, const Tensor& grad_out) {
  LayerGrad grad{grad_out, {}};
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!(input[i] > 0.0)) {
      grad.input[i] = 0.0;
    }
  }
  return grad;
}

// ---- pooling ---------------------------------------------------------------

void expect_pool_input(const LayerSpec& layer, const Tensor& input) {
  if (input.rank() != 3) {
    shape_mismatch(layer, "(B, C, L)", input.shape());
  }
}

Tensor maxpool_forward(const LayerSpec& layer, const Tensor& input) {
  expect_pool_input(layer, input);
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t length = input.dim(2);
  const std::size_t out_len = pooled_length(layer, length);
  Tensor out({input.dim(0), input.dim(1), out_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * length;
    double* y = out.data() + r * out_len;
    for (std::size_t t = 0; t < out_len; ++t) {
      const double* window = x + t * layer.stride;
      y[t] = *std::max_element(window, window + layer.kernel);
    }
  }
  return out;
}

LayerGrad maxpool_backward(const LayerSpec& layer, const Tensor& input, const Tensor& grad_out) {
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t length = input.dim(2);
  const std::size_t out_len = grad_out.dim(2);
  LayerGrad grad{Tensor::zeros_like(input), {}};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * length;
    const double* g = grad_out.data() + r * out_len;
    double* gx = grad.input.data() + r * length;
    for (std::size_t t = 0; t < out_len; ++t) {
      const double* window = x + t * layer.stride;
      // Ties route the gradient to the first maximum.
      const auto arg = static_cast<std::size_t>(std::max_element(window, window + layer.kernel) - window);
      gx[t * layer.stride + arg] += g[t];
    }
  }
  return grad;
}

Tensor avgpool_forward(const LayerSpec& layer, const Tensor& input) {
  expect_pool_input(layer, input);
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t length = input.dim(2);
  if (layer.kernel == 0) {
    if (length == 0) {
      shape_mismatch(layer, "(B, C, L >= 1)", input.shape());
    }
    Tensor out({input.dim(0), input.dim(1)});
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = input.data() + r * length;
      double acc = 0.0;
      for (std::size_t t = 0; t < length; ++t) {
        acc += x[t];
      }
      out[r] = acc / static_cast<double>(length);
    }
    return out;
  }
  const std::size_t out_len = pooled_length(layer, length);
  const double scale = 1.0 / static_cast<double>(layer.kernel);
  Tensor out({input.dim(0), input.dim(1), out_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * length;
    double* y = out.data() + r * out_len;
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < layer.kernel; ++k) {
        acc += x[t * layer.stride + k];
      }
      y[t] = acc * scale;
    }
  }
  return out;
}

LayerGrad avgpool_backward(const LayerSpec& layer, const Tensor& input, const Tensor& grad_out) {
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t length = input.dim(2);
  LayerGrad grad{Tensor::zeros_like(input), {}};
  if (layer.kernel == 0) {
    const double scale = 1.0 / static_cast<double>(length);
    for (std::size_t r = 0; r < rows; ++r) {
      double* gx = grad.input.data() + r * length;
      std::fill(gx, gx + length, grad_out[r] * scale);
    }
    return grad;
  }
  const std::size_t out_len = grad_out.dim(2);
  const double scale = 1.0 / static_cast<double>(layer.kernel);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = grad_out.data() + r * out_len;
    double* gx = grad.input.data() + r * length;
    for (std::size_t t = 0; t < out_len; ++t) {
      for (std::size_t k = 0; k < layer.kernel; ++k) {
        gx[t * layer.stride + k] += g[t] * scale;
      }
    }
  }
  return grad;
}

// ---- layernorm -------------------------------------------------------------

Tensor layernorm_forward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input) {
  if (input.rank() == 0 || input.shape().back() != layer.in) {
    shape_mismatch(layer, "(..., " + std::to_string(layer.in) + ")", input.shape());
  }
  const std::size_t dim = layer.in;
  const std::size_t rows = input.size() / dim;
  const Tensor& gamma = params[0];
  const Tensor& beta = params[1];
  Tensor out = Tensor::zeros_like(input);
  for (std::size_t n = 0; n < rows; ++n) {
    const double* x = input.data() + n * dim;
    double* y = out.data() + n * dim;
    double mean = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      mean += x[i];
    }
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      var += (x[i] - mean) * (x[i] - mean);
    }
    var /= static_cast<double>(dim);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t i = 0; i < dim; ++i) {
      y[i] = gamma[i] * (x[i] - mean) * inv_std + beta[i];
    }
  }
  return out;
}

LayerGrad layernorm_backward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input,
                             const Tensor& grad_out) {
  const std::size_t dim = layer.in;
  const std::size_t rows = input.size() / dim;
  const Tensor& gamma = params[0];
  LayerGrad grad{Tensor::zeros_like(input), {Tensor::zeros_like(params[0]), Tensor::zeros_like(params[1])}};
  std::vector<double> xhat(dim);
  std::vector<double> dxhat(dim);
  for (std::size_t n = 0; n < rows; ++n) {
    const double* x = input.data() + n * dim;
    const double* g = grad_out.data() + n * dim;
    double* gx = grad.input.data() + n * dim;
    double mean = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      mean += x[i];
    }
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      var += (x[i] - mean) * (x[i] - mean);
    }
    var /= static_cast<double>(dim);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      xhat[i] = (x[i] - mean) * inv_std;
      dxhat[i] = g[i] * gamma[i];
      mean_dxhat += dxhat[i];
      mean_dxhat_xhat += dxhat[i] * xhat[i];
      grad.params[0][i] += g[i] * xhat[i];
      grad.params[1][i] += g[i];
    }
    mean_dxhat /= static_cast<double>(dim);
    mean_dxhat_xhat /= static_cast<double>(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      gx[i] = inv_std * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
  }
  return grad;
}

// ---- attention -------------------------------------------------------------

// y = x W^T for one (T, D) slab.
void project(const double* x, const Tensor& weight, std::size_t tokens, std::size_t dim, double* y) {
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t o = 0; o < dim; ++o) {
      y[t * dim + o] = dot(weight.data() + o * dim, x + t * dim, dim);
    }
  }
}

// Accumulates dW += g^T x and dx += g W for y = x W^T.
void project_backward(const double* x, const Tensor& weight, const double* g, std::size_t tokens,
                      std::size_t dim, Tensor& grad_weight, double* grad_x) {
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t o = 0; o < dim; ++o) {
      const double go = g[t * dim + o];
      const double* w = weight.data() + o * dim;
      double* gw = grad_weight.data() + o * dim;
      for (std::size_t i = 0; i < dim; ++i) {
        gw[i] += go * x[t * dim + i];
        grad_x[t * dim + i] += go * w[i];
      }
    }
  }
}

struct AttentionCache {
  std::vector<double> q, k, v, probs, heads;
};

void attention_core(const LayerSpec& layer, std::span<const Tensor> params, const double* x, std::size_t tokens,
                    AttentionCache& cache) {
  const std::size_t dim = layer.in;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  cache.q.assign(tokens * dim, 0.0);
  cache.k.assign(tokens * dim, 0.0);
  cache.v.assign(tokens * dim, 0.0);
  cache.probs.assign(tokens * tokens, 0.0);
  cache.heads.assign(tokens * dim, 0.0);
  project(x, params[0], tokens, dim, cache.q.data());
  project(x, params[1], tokens, dim, cache.k.data());
  project(x, params[2], tokens, dim, cache.v.data());
  for (std::size_t i = 0; i < tokens; ++i) {
    double* row = cache.probs.data() + i * tokens;
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < tokens; ++j) {
      row[j] = dot(cache.q.data() + i * dim, cache.k.data() + j * dim, dim) * scale;
      row_max = std::max(row_max, row[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < tokens; ++j) {
      row[j] = std::exp(row[j] - row_max);
      total += row[j];
    }
    for (std::size_t j = 0; j < tokens; ++j) {
      row[j] /= total;
    }
    for (std::size_t j = 0; j < tokens; ++j) {
      const double p = row[j];
      for (std::size_t d = 0; d < dim; ++d) {
        cache.heads[i * dim + d] += p * cache.v[j * dim + d];
      }
    }
  }
}

void expect_tokens(const LayerSpec& layer, const Tensor& input) {
  if (input.rank() != 3 || input.dim(2) != layer.in) {
    shape_mismatch(layer, "(B, T, " + std::to_string(layer.in) + ")", input.shape());
  }
}

Tensor attention_forward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input) {
  expect_tokens(layer, input);
  const std::size_t tokens = input.dim(1);
  const std::size_t dim = layer.in;
  Tensor out = Tensor::zeros_like(input);
  AttentionCache cache;
  for (std::size_t b = 0; b < input.dim(0); ++b) {
    attention_core(layer, params, input.data() + b * tokens * dim, tokens, cache);
    project(cache.heads.data(), params[3], tokens, dim, out.data() + b * tokens * dim);
  }
  return out;
}

LayerGrad attention_backward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input,
                             const Tensor& grad_out) {
  const std::size_t tokens = input.dim(1);
  const std::size_t dim = layer.in;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  LayerGrad grad{Tensor::zeros_like(input), {}};
  for (const Tensor& p : params) {
    grad.params.push_back(Tensor::zeros_like(p));
  }
  AttentionCache cache;
  std::vector<double> d_heads, d_q, d_k, d_v, d_probs;
  for (std::size_t b = 0; b < input.dim(0); ++b) {
    const double* x = input.data() + b * tokens * dim;
    const double* g = grad_out.data() + b * tokens * dim;
    double* gx = grad.input.data() + b * tokens * dim;
    attention_core(layer, params, x, tokens, cache);

    d_heads.assign(tokens * dim, 0.0);
    project_backward(cache.heads.data(), params[3], g, tokens, dim, grad.params[3], d_heads.data());

    d_probs.assign(tokens * tokens, 0.0);
    d_v.assign(tokens * dim, 0.0);
    for (std::size_t i = 0; i < tokens; ++i) {
      for (std::size_t j = 0; j < tokens; ++j) {
        const double p = cache.probs[i * tokens + j];
        for (std::size_t d = 0; d < dim; ++d) {
          d_v[j * dim + d] += p * d_heads[i * dim + d];
        }
        d_probs[i * tokens + j] = dot(d_heads.data() + i * dim, cache.v.data() + j * dim, dim);
      }
    }
    // Softmax backward, in place: d_scores = P * (dP - rowsum(dP * P)).
    for (std::size_t i = 0; i < tokens; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < tokens; ++j) {
        dot += d_probs[i * tokens + j] * cache.probs[i * tokens + j];
      }
      for (std::size_t j = 0; j < tokens; ++j) {
        d_probs[i * tokens + j] = cache.probs[i * tokens + j] * (d_probs[i * tokens + j] - dot) * scale;
      }
    }
    d_q.assign(tokens * dim, 0.0);
    d_k.assign(tokens * dim, 0.0);
    for (std::size_t i = 0; i < tokens; ++i) {
      for (std::size_t j = 0; j < tokens; ++j) {
        const double ds = d_probs[i * tokens + j];
        for (std::size_t d = 0; d < dim; ++d) {
          d_q[i * dim + d] += ds * cache.k[j * dim + d];
          d_k[j * dim + d] += ds * cache.q[i * dim + d];
        }
      }
    }
    project_backward(x, params[0], d_q.data(), tokens, dim, grad.params[0], gx);
    project_backward(x, params[1], d_k.data(), tokens, dim, grad.params[1], gx);
    project_backward(x, params[2], d_v.data(), tokens, dim, grad.params[2], gx);
  }
  return grad;
}

// ---- patch embedding -------------------------------------------------------

LayerSpec patch_as_linear(const LayerSpec& layer) {
  return LayerSpec::linear(layer.name, layer.patch_len, layer.out);
}

Tensor patch_embed_forward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input) {
  if (input.rank() != 3 || input.dim(1) != 1 || input.dim(2) % layer.patch_len != 0) {
    shape_mismatch(layer, "(B, 1, L) with L divisible by " + std::to_string(layer.patch_len), input.shape());
  }
  const std::size_t patches = input.dim(2) / layer.patch_len;
  return linear_forward(patch_as_linear(layer), params, input.reshaped({input.dim(0), patches, layer.patch_len}));
}

LayerGrad patch_embed_backward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input,
                               const Tensor& grad_out) {
  const std::size_t patches = input.dim(2) / layer.patch_len;
  LayerGrad grad = linear_backward(patch_as_linear(layer), params,
                                   input.reshaped({input.dim(0), patches, layer.patch_len}), grad_out);
  grad.input = std::move(grad.input).reshaped(input.shape());
  return grad;
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::avgpool1d: return "avgpool1d";
    case LayerKind::layernorm: return "layernorm";
    case LayerKind::attention: return "attention";
    case LayerKind::patch_embed: return "patch_embed";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv1d(std::string name, std::size_t in, std::size_t out, std::size_t kernel,
                            std::size_t stride) {
  return {LayerKind::conv1d, std::move(name), in, out, kernel, stride, 0};
}
LayerSpec LayerSpec::linear(std::string name, std::size_t in, std::size_t out) {
  return {LayerKind::linear, std::move(name), in, out, 0, 1, 0};
}
LayerSpec LayerSpec::relu(std::string name) { return {LayerKind::relu, std::move(name), 0, 0, 0, 1, 0}; }
LayerSpec LayerSpec::maxpool1d(std::string name, std::size_t kernel, std::size_t stride) {
  return {LayerKind::maxpool1d, std::move(name), 0, 0, kernel, stride, 0};
}
LayerSpec LayerSpec::avgpool1d(std::string name, std::size_t kernel, std::size_t stride) {
  return {LayerKind::avgpool1d, std::move(name), 0, 0, kernel, stride, 0};
}
LayerSpec LayerSpec::global_avgpool(std::string name) { return avgpool1d(std::move(name), 0, 1); }
LayerSpec LayerSpec::layernorm(std::string name, std::size_t dim) {
  return {LayerKind::layernorm, std::move(name), dim, dim, 0, 1, 0};
}
LayerSpec LayerSpec::attention(std::string name, std::size_t dim) {
  return {LayerKind::attention, std::move(name), dim, dim, 0, 1, 0};
}
LayerSpec LayerSpec::patch_embed(std::string name, std::size_t patch_len, std::size_t dim) {
  return {LayerKind::patch_embed, std::move(name), 1, dim, 0, 1, patch_len};
}

void LayerSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument(std::string(to_string(kind)) + " layer '" + name + "': " + what);
  };
  if (stride < 1) {
    fail("stride must be >= 1");
  }
  switch (kind) {
    case LayerKind::conv1d:
      if (kernel < 1) fail("kernel size must be >= 1");
      if (in < 1 || out < 1) fail("channel counts must be >= 1");
      break;
    case LayerKind::linear:
    case LayerKind::layernorm:
    case LayerKind::attention:
      if (in < 1 || out < 1) fail("feature sizes must be >= 1");
      break;
    case LayerKind::maxpool1d:
      if (kernel < 1) fail("kernel size must be >= 1");
      break;
    case LayerKind::patch_embed:
      if (patch_len < 1 || out < 1) fail("patch length and dim must be >= 1");
      break;
    case LayerKind::avgpool1d:
    case LayerKind::relu:
      break;
  }
}

std::vector<Shape> LayerSpec::param_shapes() const {
  switch (kind) {
    case LayerKind::conv1d: return {{out, in, kernel}, {out}};
    case LayerKind::linear: return {{out, in}, {out}};
    case LayerKind::layernorm: return {{in}, {in}};
    case LayerKind::attention: return {{in, in}, {in, in}, {in, in}, {in, in}};
    case LayerKind::patch_embed: return {{out, patch_len}, {out}};
    case LayerKind::relu:
    case LayerKind::maxpool1d:
    case LayerKind::avgpool1d: return {};
  }
  return {};
}

std::size_t LayerSpec::fan_in(std::size_t /*index*/) const {
  switch (kind) {
    case LayerKind::conv1d: return in * kernel;
    case LayerKind::patch_embed: return patch_len;
    default: return std::max<std::size_t>(in, 1);
  }
}

Shape LayerSpec::output_shape(const Shape& input) const {
  switch (kind) {
    case LayerKind::conv1d:
      if (input.size() != 3 || input[1] != in) {
        shape_mismatch(*this, "(B, " + std::to_string(in) + ", L)", input);
      }
      return {input[0], out, pooled_length(*this, input[2])};
    case LayerKind::linear:
      if (input.empty() || input.back() != in) {
        shape_mismatch(*this, "(..., " + std::to_string(in) + ")", input);
      }
      {
        Shape shape = input;
        shape.back() = out;
        return shape;
      }
    case LayerKind::relu: return input;
    case LayerKind::maxpool1d:
    case LayerKind::avgpool1d:
      if (input.size() != 3) {
        shape_mismatch(*this, "(B, C, L)", input);
      }
      if (kind == LayerKind::avgpool1d && kernel == 0) {
        return {input[0], input[1]};
      }
      return {input[0], input[1], pooled_length(*this, input[2])};
    case LayerKind::layernorm:
      if (input.empty() || input.back() != in) {
        shape_mismatch(*this, "(..., " + std::to_string(in) + ")", input);
      }
      return input;
    case LayerKind::attention:
      if (input.size() != 3 || input[2] != in) {
        shape_mismatch(*this, "(B, T, " + std::to_string(in) + ")", input);
      }
      return input;
    case LayerKind::patch_embed:
      if (input.size() != 3 || input[1] != 1 || input[2] % patch_len != 0) {
        shape_mismatch(*this, "(B, 1, L) with L divisible by " + std::to_string(patch_len), input);
      }
      return {input[0], input[2] / patch_len, out};
  }
  throw std::logic_error("unhandled layer kind");
}

Tensor layer_forward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input) {
  expect_params(layer, params);
  switch (layer.kind) {
    case LayerKind::conv1d: return conv1d_forward(layer, params, input);
    case LayerKind::linear: return linear_forward(layer, params, input);
    case LayerKind::relu: return relu_forward(input);
    case LayerKind::maxpool1d: return maxpool_forward(layer, input);
    case LayerKind::avgpool1d: return avgpool_forward(layer, input);
    case LayerKind::layernorm: return layernorm_forward(layer, params, input);
    case LayerKind::attention: return attention_forward(layer, params, input);
    case LayerKind::patch_embed: return patch_embed_forward(layer, params, input);
  }
  throw std::logic_error("unhandled layer kind");
}

LayerGrad layer_backward(const LayerSpec& layer, std::span<const Tensor> params, const Tensor& input,
                         const Tensor& grad_out) {
  expect_params(layer, params);
  const Shape expected = layer.output_shape(input.shape());
  if (grad_out.shape() != expected) {
    throw ShapeError(std::string(to_string(layer.kind)) + " layer '" + layer.name + "' expects output gradient " +
                     shape_string(expected) + ", got " + shape_string(grad_out.shape()));
  }
  switch (layer.kind) {
    case LayerKind::conv1d: return conv1d_backward(layer, params, input, grad_out);
    case LayerKind::linear: return linear_backward(layer, params, input, grad_out);
    case LayerKind::relu: return relu_backward(input, grad_out);
    case LayerKind::maxpool1d: return maxpool_backward(layer, input, grad_out);
    case LayerKind::avgpool1d: return avgpool_backward(layer, input, grad_out);
    case LayerKind::layernorm: return layernorm_backward(layer, params, input, grad_out);
    case LayerKind::attention: return attention_backward(layer, params, input, grad_out);
    case LayerKind::patch_embed: return patch_embed_backward(layer, params, input, grad_out);
  }
  throw std::logic_error("unhandled layer kind");
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_sim: vectors of length " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) {
    log::warn("cosine_sim: near-zero norm ({:.3g}, {:.3g}); returning 0", na, nb);
    return 0.0;
  }
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

}  // namespace mia::nn
