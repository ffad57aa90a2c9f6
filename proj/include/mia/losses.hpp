#pragma once

#include <span>
#include <vector>

#include "mia/nn/tensor.hpp"

namespace mia {

/// Boolean mask over the patches of one window.
struct MaskPattern {
  std::vector<bool> masked;  // one entry per patch
  std::size_t patch_len = 0;

  std::size_t patch_count() const { return masked.size(); }
  std::size_t masked_count() const;
  bool sample_masked(std::size_t sample) const { return masked[sample / patch_len]; }
  bool operator==(const MaskPattern&) const = default;
};

struct PairLoss {
  double loss = 0.0;
  nn::Tensor grad_view1;
  nn::Tensor grad_view2;
};

/// InfoNCE over the 2B stacked views [view1; view2] (each B x D) with cosine
/// similarity and temperature; the positive of row i is row i +/- B.
PairLoss info_nce_loss(const nn::Tensor& view1, const nn::Tensor& view2, double temperature);

struct MultiLevelLoss {
  double loss = 0.0;
  std::vector<nn::Tensor> grad_view1;
  std::vector<nn::Tensor> grad_view2;
};

/// Mean InfoNCE across temporal resolutions; level r holds the view
/// embeddings after max-pooling the feature map with kernel 2^r.
MultiLevelLoss ts2vec_loss(std::span<const nn::Tensor> view1_levels, std::span<const nn::Tensor> view2_levels,
                           double temperature);

/// Mean squared error over samples inside masked patches. When `grad_x_hat`
/// is non-null it receives d loss / d x_hat (zero at visible samples).
double mae_loss(std::span<const double> x, std::span<const double> x_hat, const MaskPattern& mask,
                std::vector<double>* grad_x_hat = nullptr);

}  // namespace mia
