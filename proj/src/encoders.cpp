#include "mia/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mia/error.hpp"
#include "mia/parallel.hpp"
#include "mia/rng.hpp"

namespace mia {

namespace {

constexpr std::size_t kShardRows = 16;

using nn::LayerSpec;
using nn::Sequential;
using nn::Tensor;

std::size_t masked_patch_target(std::size_t patch_count, double mask_ratio) {
  return static_cast<std::size_t>(std::llround(mask_ratio * static_cast<double>(patch_count)));
}

Tensor rows_of(const Tensor& input, std::size_t begin, std::size_t count) {
  return nn::slice_leading(input, begin, count);
}

void copy_rows(const Tensor& from, Tensor& into, std::size_t row_offset) {
  const std::size_t row = from.size() / from.dim(0);
  std::copy(from.data(), from.data() + from.size(), into.data() + row_offset * row);
}

void accumulate(nn::Gradients& into, const nn::Gradients& from) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    into[i] += from[i];
  }
}

std::size_t shard_count(std::size_t rows) { return (rows + kShardRows - 1) / kShardRows; }

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::simclr_cnn: return "simclr_cnn";
    case Family::ts2vec: return "ts2vec";
    case Family::mae_cnn: return "mae_cnn";
    case Family::mae_transformer: return "mae_transformer";
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  for (Family f : {Family::simclr_cnn, Family::ts2vec, Family::mae_cnn, Family::mae_transformer}) {
    if (to_string(f) == name) {
      return f;
    }
  }
  throw ValidationError("unknown encoder family '" + name +
                        "' (expected simclr_cnn, ts2vec, mae_cnn or mae_transformer)");
}

struct EncoderModel::Layout {
  Sequential trunk;
  std::vector<Sequential> heads;  // ts2vec: one per resolution; others: one projection
  Sequential decoder_pool;
  Sequential decoder_out;
  Sequential patch;
  std::size_t mask_token = 0;
  std::size_t position = 0;
  std::vector<Sequential> attention;
  std::vector<Sequential> mlp;
  Sequential final_norm;
};

struct EncoderModel::ContrastiveTrace {
  std::vector<Tensor> trunk;
  std::vector<std::vector<Tensor>> heads;
};

struct EncoderModel::MaeTrace {
  std::vector<Tensor> trunk;
  std::vector<Tensor> pool;
  std::vector<Tensor> out;
  std::vector<Tensor> patch;
  std::vector<std::vector<Tensor>> attention;
  std::vector<std::vector<Tensor>> mlp;
  std::vector<Tensor> final_norm;
  std::vector<MaskPattern> masks;
};

namespace {

std::size_t trunk_length(const EncoderConfig& cfg) {
  std::size_t length = kWindowLength;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    if (length < cfg.kernel) {
      return 0;
    }
    length = (length - cfg.kernel) / cfg.stride + 1;
  }
  return length;
}

}  // namespace

void EncoderConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) {
    throw ValidationError("encoder." + field + " " + what);
  };
  if (embedding_dim == 0) fail("embedding_dim", "must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature", "must be > 0");
  if (patch_len == 0 || kWindowLength % patch_len != 0) {
    fail("patch_len", "must divide " + std::to_string(kWindowLength) + ", got " + std::to_string(patch_len));
  }
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail("mask_ratio", "must lie in (0, 1)");
  const std::size_t masked = masked_patch_target(patch_count(), mask_ratio);
  if (masked == 0 || masked == patch_count()) {
    fail("mask_ratio", "masks " + std::to_string(masked) + " of " + std::to_string(patch_count()) + " patches");
  }
  if (resolutions == 0) fail("resolutions", "must be >= 1");
  if (epochs == 0) fail("epochs", "must be >= 1");
  if (batch_size == 0) fail("batch_size", "must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be > 0");
  if (!(clip_threshold > 0.0) || !std::isfinite(clip_threshold)) fail("clip_threshold", "must be > 0");
  augment.validate(kWindowLength);

  if (family == Family::mae_transformer) {
    if (blocks == 0) fail("blocks", "must be >= 1");
    if (mlp_dim == 0) fail("mlp_dim", "must be >= 1");
    return;
  }
  if (channels.empty()) fail("channels", "must list at least one conv block");
  if (std::find(channels.begin(), channels.end(), 0) != channels.end()) fail("channels", "entries must be >= 1");
  if (kernel == 0) fail("kernel", "must be >= 1");
  if (stride == 0) fail("stride", "must be >= 1");
  const std::size_t length = trunk_length(*this);
  if (length == 0) fail("channels", "conv stack shrinks the window below one sample");
  if (family == Family::ts2vec && resolutions > 1 && (std::size_t{1} << (resolutions - 1)) > length) {
    fail("resolutions", "pools a " + std::to_string(length) + "-step feature map below one step");
  }
  if (family == Family::mae_cnn) {
    const std::size_t k = length / patch_count();
    if (k == 0 || (length - k) / k + 1 != patch_count()) {
      fail("patch_len", "trunk output of " + std::to_string(length) + " steps cannot be pooled to " +
                            std::to_string(patch_count()) + " patches");
    }
  }
}

MaskPattern random_mask(std::size_t patch_count, std::size_t patch_len, double mask_ratio, SeededRng& rng) {
  MaskPattern mask;
  mask.patch_len = patch_len;
  mask.masked.assign(patch_count, false);
  for (std::size_t p : rng.sample_without_replacement(patch_count, masked_patch_target(patch_count, mask_ratio))) {
    mask.masked[p] = true;
  }
  return mask;
}

std::vector<MaskPattern> make_fixed_masks(std::size_t k, std::size_t patch_count, double mask_ratio,
                                          std::uint64_t seed) {
  if (k == 0) {
    throw std::invalid_argument("make_fixed_masks: K must be >= 1");
  }
  if (patch_count == 0 || kWindowLength % patch_count != 0) {
    throw std::invalid_argument("make_fixed_masks: patch count must divide the window length");
  }
  const std::size_t patch_len = kWindowLength / patch_count;
  SeededRng rng(seed, stream_id("fixed-masks"));
  std::vector<MaskPattern> masks;
  constexpr int kRedraws = 1000;
  while (masks.size() < k) {
    MaskPattern mask = random_mask(patch_count, patch_len, mask_ratio, rng);
    for (int attempt = 0; attempt < kRedraws && std::find(masks.begin(), masks.end(), mask) != masks.end();
         ++attempt) {
      mask = random_mask(patch_count, patch_len, mask_ratio, rng);
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

EncoderModel::EncoderModel(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  auto layout = std::make_shared<Layout>();
  SeededRng rng(cfg_.seed, stream_id("init"));
  const std::size_t dim = cfg_.embedding_dim;

  if (cfg_.family == Family::mae_transformer) {
    const std::size_t patches = cfg_.patch_count();
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    layout->patch = Sequential({LayerSpec::patch_embed("patch", cfg_.patch_len, dim)});
    layout->patch.register_params(params_, rng);
    layout->mask_token = params_.add_uniform("mask_token", {dim}, bound, rng);
    layout->position = params_.add_uniform("position", {patches, dim}, bound, rng);
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
      const std::string prefix = "block" + std::to_string(b) + ".";
      Sequential attn({LayerSpec::layernorm(prefix + "ln1", dim), LayerSpec::attention(prefix + "attn", dim)});
      attn.register_params(params_, rng);
      Sequential mlp({LayerSpec::layernorm(prefix + "ln2", dim), LayerSpec::linear(prefix + "fc1", dim, cfg_.mlp_dim),
                      LayerSpec::relu(prefix + "relu"), LayerSpec::linear(prefix + "fc2", cfg_.mlp_dim, dim)});
      mlp.register_params(params_, rng);
      layout->attention.push_back(std::move(attn));
      layout->mlp.push_back(std::move(mlp));
    }
    layout->final_norm = Sequential({LayerSpec::layernorm("final_ln", dim)});
    layout->final_norm.register_params(params_, rng);
    layout->decoder_out = Sequential({LayerSpec::linear("decoder", dim, cfg_.patch_len)});
    layout->decoder_out.register_params(params_, rng);
    layout_ = std::move(layout);
    return;
  }

  std::vector<LayerSpec> trunk;
  std::size_t in = 1;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const std::string idx = std::to_string(i);
    trunk.push_back(LayerSpec::conv1d("conv" + idx, in, cfg_.channels[i], cfg_.kernel, cfg_.stride));
    trunk.push_back(LayerSpec::relu("relu" + idx));
    in = cfg_.channels[i];
  }
  layout->trunk = Sequential(std::move(trunk));
  layout->trunk.register_params(params_, rng);

  const std::size_t heads = cfg_.family == Family::ts2vec ? cfg_.resolutions : 1;
  for (std::size_t r = 0; r < heads; ++r) {
    const std::string idx = std::to_string(r);
    std::vector<LayerSpec> head;
    if (r > 0) {
      const std::size_t k = std::size_t{1} << r;
      head.push_back(LayerSpec::maxpool1d("pool" + idx, k, k));
    }
    head.push_back(LayerSpec::global_avgpool("gap" + idx));
    head.push_back(LayerSpec::linear("proj" + idx, in, dim));
    layout->heads.emplace_back(std::move(head));
    layout->heads.back().register_params(params_, rng);
  }

  if (cfg_.family == Family::mae_cnn) {
    const std::size_t k = trunk_length(cfg_) / cfg_.patch_count();
    layout->decoder_pool = Sequential({LayerSpec::avgpool1d("decoder_pool", k, k)});
    layout->decoder_pool.register_params(params_, rng);
    layout->decoder_out = Sequential({LayerSpec::linear("decoder", in, cfg_.patch_len)});
    layout->decoder_out.register_params(params_, rng);
  }
  layout_ = std::move(layout);
}

std::vector<Tensor> EncoderModel::contrastive_forward(const Tensor& x, ContrastiveTrace* trace) const {
  const Tensor features = layout_->trunk.forward(params_, x, trace ? &trace->trunk : nullptr);
  if (trace != nullptr) {
    trace->heads.resize(layout_->heads.size());
  }
  std::vector<Tensor> levels;
  for (std::size_t r = 0; r < layout_->heads.size(); ++r) {
    levels.push_back(layout_->heads[r].forward(params_, features, trace ? &trace->heads[r] : nullptr));
  }
  return levels;
}

void EncoderModel::contrastive_backward(const ContrastiveTrace& trace, std::span<const Tensor> grad_levels,
                                        nn::Gradients& grads) const {
  Tensor grad_features;
  for (std::size_t r = 0; r < layout_->heads.size(); ++r) {
    Tensor g = layout_->heads[r].backward(params_, trace.heads[r], grad_levels[r], grads);
    if (r == 0) {
      grad_features = std::move(g);
    } else {
      grad_features += g;
    }
  }
  layout_->trunk.backward(params_, trace.trunk, grad_features, grads);
}

Tensor EncoderModel::transformer_tokens(const Tensor& x, std::span<const MaskPattern> masks, MaeTrace* trace) const {
  const Layout& L = *layout_;
  Tensor h = L.patch.forward(params_, x, trace ? &trace->patch : nullptr);
  const std::size_t batch = h.dim(0);
  const std::size_t patches = h.dim(1);
  const std::size_t dim = h.dim(2);
  const Tensor& token = params_[L.mask_token];
  const Tensor& position = params_[L.position];
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < patches; ++t) {
      double* row = h.data() + (n * patches + t) * dim;
      if (!masks.empty() && masks[n].masked[t]) {
        std::copy(token.data(), token.data() + dim, row);
      }
      for (std::size_t d = 0; d < dim; ++d) {
        row[d] += position[t * dim + d];
      }
    }
  }
  if (trace != nullptr) {
    trace->attention.resize(L.attention.size());
    trace->mlp.resize(L.mlp.size());
  }
  for (std::size_t b = 0; b < L.attention.size(); ++b) {
    h += L.attention[b].forward(params_, h, trace ? &trace->attention[b] : nullptr);
    h += L.mlp[b].forward(params_, h, trace ? &trace->mlp[b] : nullptr);
  }
  return L.final_norm.forward(params_, h, trace ? &trace->final_norm : nullptr);
}

Tensor EncoderModel::mae_forward(const Tensor& x, std::span<const MaskPattern> masks, MaeTrace* trace) const {
  const Layout& L = *layout_;
  const std::size_t batch = x.dim(0);
  if (trace != nullptr) {
    trace->masks.assign(masks.begin(), masks.end());
  }
  if (cfg_.family == Family::mae_transformer) {
    const Tensor z = transformer_tokens(x, masks, trace);
    return L.decoder_out.forward(params_, z, trace ? &trace->out : nullptr).reshaped({batch, kWindowLength});
  }
  Tensor masked = x;
  for (std::size_t n = 0; n < batch; ++n) {
    double* row = masked.data() + n * kWindowLength;
    for (std::size_t i = 0; i < kWindowLength; ++i) {
      if (masks[n].sample_masked(i)) {
        row[i] = 0.0;
      }
    }
  }
  const Tensor features = L.trunk.forward(params_, masked, trace ? &trace->trunk : nullptr);
  const Tensor pooled = L.decoder_pool.forward(params_, features, trace ? &trace->pool : nullptr);
  return L.decoder_out.forward(params_, nn::transpose_last2(pooled), trace ? &trace->out : nullptr)
      .reshaped({batch, kWindowLength});
}

void EncoderModel::mae_backward(const MaeTrace& trace, const Tensor& grad_recon, nn::Gradients& grads) const {
  const Layout& L = *layout_;
  const std::size_t batch = grad_recon.dim(0);
  const std::size_t patches = cfg_.patch_count();
  const Tensor grad_out = grad_recon.reshaped({batch, patches, cfg_.patch_len});
  Tensor g = L.decoder_out.backward(params_, trace.out, grad_out, grads);

  if (cfg_.family == Family::mae_cnn) {
    const Tensor grad_features = L.decoder_pool.backward(params_, trace.pool, nn::transpose_last2(g), grads);
    L.trunk.backward(params_, trace.trunk, grad_features, grads);
    return;
  }

  g = L.final_norm.backward(params_, trace.final_norm, g, grads);
  for (std::size_t b = L.attention.size(); b-- > 0;) {
    g += L.mlp[b].backward(params_, trace.mlp[b], g, grads);
    g += L.attention[b].backward(params_, trace.attention[b], g, grads);
  }
  const std::size_t dim = cfg_.embedding_dim;
  Tensor& grad_token = grads[L.mask_token];
  Tensor& grad_position = grads[L.position];
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < patches; ++t) {
      double* row = g.data() + (n * patches + t) * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        grad_position[t * dim + d] += row[d];
      }
      if (trace.masks[n].masked[t]) {
        for (std::size_t d = 0; d < dim; ++d) {
          grad_token[d] += row[d];
          row[d] = 0.0;
        }
      }
    }
  }
  L.patch.backward(params_, trace.patch, g, grads);
}

Tensor EncoderModel::encode_batch(const Tensor& windows) const {
  if (windows.rank() != 3 || windows.dim(1) != 1 || windows.dim(2) != kWindowLength) {
    throw ShapeError("encode_batch: expected (B, 1, " + std::to_string(kWindowLength) + ") windows, got " +
                     nn::shape_string(windows.shape()));
  }
  if (cfg_.family != Family::mae_transformer) {
    const Tensor features = layout_->trunk.forward(params_, windows);
    return layout_->heads[0].forward(params_, features);
  }
  const Tensor z = transformer_tokens(windows, {}, nullptr);
  const std::size_t batch = z.dim(0);
  const std::size_t patches = z.dim(1);
  const std::size_t dim = z.dim(2);
  Tensor out({batch, dim});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < patches; ++t) {
      for (std::size_t d = 0; d < dim; ++d) {
        out[n * dim + d] += z[(n * patches + t) * dim + d];
      }
    }
  }
  out *= 1.0 / static_cast<double>(patches);
  return out;
}

std::vector<double> EncoderModel::encode(std::span<const double> window) const {
  if (window.size() != kWindowLength) {
    throw ShapeError("encode: window has " + std::to_string(window.size()) + " samples, expected " +
                     std::to_string(kWindowLength));
  }
  const Tensor x({1, 1, kWindowLength}, std::vector<double>(window.begin(), window.end()));
  return encode_batch(x).vector();
}

std::vector<double> EncoderModel::reconstruct(std::span<const double> window, const MaskPattern& mask) const {
  if (!is_mae(cfg_.family)) {
    throw std::invalid_argument("reconstruct: " + to_string(cfg_.family) + " has no reconstruction pathway");
  }
  if (window.size() != kWindowLength || mask.patch_len != cfg_.patch_len || mask.patch_count() != cfg_.patch_count()) {
    throw ShapeError("reconstruct: window or mask does not match the model's " + std::to_string(cfg_.patch_count()) +
                     " x " + std::to_string(cfg_.patch_len) + " patch grid");
  }
  const Tensor x({1, 1, kWindowLength}, std::vector<double>(window.begin(), window.end()));
  return mae_forward(x, std::span(&mask, 1), nullptr).vector();
}

double EncoderModel::contrastive_step(const Tensor& view1, const Tensor& view2, nn::Gradients& grads,
                                      std::size_t threads) const {
  if (!is_contrastive(cfg_.family)) {
    throw std::invalid_argument("contrastive_step: " + to_string(cfg_.family) + " is not contrastive");
  }
  if (view1.shape() != view2.shape() || view1.rank() != 3 || view1.dim(1) != 1 || view1.dim(2) != kWindowLength) {
    throw ShapeError("contrastive_step: views must both be (B, 1, " + std::to_string(kWindowLength) + ")");
  }
  const std::size_t batch = view1.dim(0);
  const std::size_t rows = 2 * batch;
  Tensor all({rows, 1, kWindowLength});
  copy_rows(view1, all, 0);
  copy_rows(view2, all, batch);

  const std::size_t shards = shard_count(rows);
  std::vector<ContrastiveTrace> traces(shards);
  std::vector<std::vector<Tensor>> shard_levels(shards);
  parallel_for(shards, threads, [&](std::size_t s) {
    const std::size_t begin = s * kShardRows;
    const std::size_t count = std::min(kShardRows, rows - begin);
    shard_levels[s] = contrastive_forward(rows_of(all, begin, count), &traces[s]);
  });

  const std::size_t levels = layout_->heads.size();
  std::vector<Tensor> first(levels);
  std::vector<Tensor> second(levels);
  for (std::size_t r = 0; r < levels; ++r) {
    Tensor full({rows, cfg_.embedding_dim});
    for (std::size_t s = 0; s < shards; ++s) {
      copy_rows(shard_levels[s][r], full, s * kShardRows);
    }
    first[r] = rows_of(full, 0, batch);
    second[r] = rows_of(full, batch, batch);
  }
  const MultiLevelLoss loss = ts2vec_loss(first, second, cfg_.temperature);

  std::vector<Tensor> grad_full(levels);
  for (std::size_t r = 0; r < levels; ++r) {
    grad_full[r] = Tensor({rows, cfg_.embedding_dim});
    copy_rows(loss.grad_view1[r], grad_full[r], 0);
    copy_rows(loss.grad_view2[r], grad_full[r], batch);
  }
  std::vector<nn::Gradients> shard_grads(shards);
  parallel_for(shards, threads, [&](std::size_t s) {
    const std::size_t begin = s * kShardRows;
    const std::size_t count = std::min(kShardRows, rows - begin);
    std::vector<Tensor> g;
    for (std::size_t r = 0; r < levels; ++r) {
      g.push_back(rows_of(grad_full[r], begin, count));
    }
    shard_grads[s] = params_.zero_gradients();
    contrastive_backward(traces[s], g, shard_grads[s]);
    traces[s] = {};
  });
  for (const auto& g : shard_grads) {
    accumulate(grads, g);
  }
  return loss.loss;
}

double EncoderModel::mae_step(const Tensor& windows, std::span<const MaskPattern> masks, nn::Gradients& grads,
                              std::size_t threads) const {
  if (!is_mae(cfg_.family)) {
    throw std::invalid_argument("mae_step: " + to_string(cfg_.family) + " is not a masked autoencoder");
  }
  if (windows.rank() != 3 || windows.dim(1) != 1 || windows.dim(2) != kWindowLength ||
      masks.size() != windows.dim(0)) {
    throw ShapeError("mae_step: expected (B, 1, " + std::to_string(kWindowLength) + ") windows with B masks");
  }
  const std::size_t batch = windows.dim(0);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const std::size_t shards = shard_count(batch);
  std::vector<double> shard_loss(shards, 0.0);
  std::vector<nn::Gradients> shard_grads(shards);
  parallel_for(shards, threads, [&](std::size_t s) {
    const std::size_t begin = s * kShardRows;
    const std::size_t count = std::min(kShardRows, batch - begin);
    const Tensor x = rows_of(windows, begin, count);
    const auto shard_masks = masks.subspan(begin, count);
    MaeTrace trace;
    const Tensor recon = mae_forward(x, shard_masks, &trace);
    Tensor grad_recon({count, kWindowLength});
    std::vector<double> g;
    for (std::size_t n = 0; n < count; ++n) {
      const auto target = x.values().subspan(n * kWindowLength, kWindowLength);
      const auto estimate = recon.values().subspan(n * kWindowLength, kWindowLength);
      shard_loss[s] += mae_loss(target, estimate, shard_masks[n], &g) * inv_batch;
      for (std::size_t i = 0; i < kWindowLength; ++i) {
        grad_recon[n * kWindowLength + i] = g[i] * inv_batch;
      }
    }
    shard_grads[s] = params_.zero_gradients();
    mae_backward(trace, grad_recon, shard_grads[s]);
  });
  double loss = 0.0;
  for (std::size_t s = 0; s < shards; ++s) {
    loss += shard_loss[s];
    accumulate(grads, shard_grads[s]);
  }
  return loss;
}

}  // namespace mia
