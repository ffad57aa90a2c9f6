#include "mia/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mia/error.hpp"

namespace mia {

std::size_t MaskPattern::masked_count() const {
  return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
}

PairLoss info_nce_loss(const nn::Tensor& view1, const nn::Tensor& view2, double temperature) {
  if (view1.rank() != 2 || view1.shape() != view2.shape()) {
    throw ShapeError("info_nce_loss: views must both be (B, D), got " + nn::shape_string(view1.shape()) + " and " +
                     nn::shape_string(view2.shape()));
  }
  if (view1.dim(0) == 0) {
    throw std::invalid_argument("info_nce_loss: batch size must be >= 1");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("info_nce_loss: temperature must be positive");
  }
  const std::size_t batch = view1.dim(0);
  const std::size_t dim = view1.dim(1);
  const std::size_t rows = 2 * batch;

  std::vector<double> unit(rows * dim);
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* z = i < batch ? view1.data() + i * dim : view2.data() + (i - batch) * dim;
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      sq += z[d] * z[d];
    }
    norms[i] = std::max(std::sqrt(sq), 1e-12);
    for (std::size_t d = 0; d < dim; ++d) {
      unit[i * dim + d] = z[d] / norms[i];
    }
  }

  // Logits s_ij = <u_i, u_j> / temperature.
  std::vector<double> logits(rows * rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = i; j < rows; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        dot += unit[i * dim + d] * unit[j * dim + d];
      }
      logits[i * rows + j] = logits[j * rows + i] = dot / temperature;
    }
  }

  // dL/ds_ij = (softmax_{j != i}(s_i.)_j - [j == p(i)]) / 2B.
  std::vector<double> coeff(rows * rows, 0.0);
  double loss = 0.0;
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t pos = i < batch ? i + batch : i - batch;
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rows; ++j) {
      if (j != i) {
        row_max = std::max(row_max, logits[i * rows + j]);
      }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
      if (j != i) {
        total += std::exp(logits[i * rows + j] - row_max);
      }
    }
    const double log_denominator = row_max + std::log(total);
    loss -= (logits[i * rows + pos] - log_denominator) * inv_rows;
    for (std::size_t j = 0; j < rows; ++j) {
      if (j != i) {
        const double p = std::exp(logits[i * rows + j] - log_denominator);
        coeff[i * rows + j] = (p - (j == pos ? 1.0 : 0.0)) * inv_rows;
      }
    }
  }

  // Back through the symmetric similarity and the l2 normalization.
  PairLoss out{loss, nn::Tensor::zeros_like(view1), nn::Tensor::zeros_like(view2)};
  std::vector<double> grad_unit(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    std::fill(grad_unit.begin(), grad_unit.end(), 0.0);
    for (std::size_t j = 0; j < rows; ++j) {
      const double c = (coeff[i * rows + j] + coeff[j * rows + i]) / temperature;
      if (c == 0.0) {
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) {
        grad_unit[d] += c * unit[j * dim + d];
      }
    }
    double radial = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      radial += grad_unit[d] * unit[i * dim + d];
    }
    double* g = i < batch ? out.grad_view1.data() + i * dim : out.grad_view2.data() + (i - batch) * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      g[d] = (grad_unit[d] - radial * unit[i * dim + d]) / norms[i];
    }
  }
  return out;
}

MultiLevelLoss ts2vec_loss(std::span<const nn::Tensor> view1_levels, std::span<const nn::Tensor> view2_levels,
                           double temperature) {
  if (view1_levels.empty()) {
    throw std::invalid_argument("ts2vec_loss: at least one resolution is required");
  }
  if (view1_levels.size() != view2_levels.size()) {
    throw ShapeError("ts2vec_loss: views carry different numbers of resolutions");
  }
  const double weight = 1.0 / static_cast<double>(view1_levels.size());
  MultiLevelLoss out;
  for (std::size_t r = 0; r < view1_levels.size(); ++r) {
    PairLoss level = info_nce_loss(view1_levels[r], view2_levels[r], temperature);
    out.loss += weight * level.loss;
    level.grad_view1 *= weight;
    level.grad_view2 *= weight;
    out.grad_view1.push_back(std::move(level.grad_view1));
    out.grad_view2.push_back(std::move(level.grad_view2));
  }
  return out;
}

double mae_loss(std::span<const double> x, std::span<const double> x_hat, const MaskPattern& mask,
                std::vector<double>* grad_x_hat) {
  if (x.size() != x_hat.size() || mask.patch_len == 0 || x.size() != mask.patch_count() * mask.patch_len) {
    throw ShapeError("mae_loss: window of " + std::to_string(x.size()) + " samples, reconstruction of " +
                     std::to_string(x_hat.size()) + ", mask covering " +
                     std::to_string(mask.patch_count() * mask.patch_len));
  }
  const std::size_t masked = mask.masked_count() * mask.patch_len;
  if (masked == 0) {
    throw std::invalid_argument("mae_loss: mask has no masked patches");
  }
  const double inv = 1.0 / static_cast<double>(masked);
  if (grad_x_hat != nullptr) {
    grad_x_hat->assign(x.size(), 0.0);
  }
  double total = 0.0;
  for (std::size_t p = 0; p < mask.patch_count(); ++p) {
    if (!mask.masked[p]) {
      continue;
    }
    for (std::size_t i = p * mask.patch_len; i < (p + 1) * mask.patch_len; ++i) {
      const double r = x_hat[i] - x[i];
      total += r * r;
      if (grad_x_hat != nullptr) {
        (*grad_x_hat)[i] = 2.0 * r * inv;
      }
    }
  }
  return total * inv;
}

}  // namespace mia
