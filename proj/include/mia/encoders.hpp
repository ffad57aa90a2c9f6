#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mia/augment.hpp"
#include "mia/corpus.hpp"
#include "mia/losses.hpp"
#include "mia/nn/sequential.hpp"

namespace mia {

enum class Family { simclr_cnn, ts2vec, mae_cnn, mae_transformer };

std::string to_string(Family family);
Family parse_family(const std::string& name);  // ValidationError on unknown names
inline bool is_mae(Family f) { return f == Family::mae_cnn || f == Family::mae_transformer; }
inline bool is_contrastive(Family f) { return !is_mae(f); }

struct EncoderConfig {
  Family family = Family::simclr_cnn;
  std::size_t embedding_dim = 64;

  // CNN trunk: one conv1d + relu block per entry of `channels`.
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t kernel = 7;
  std::size_t stride = 2;

  // Transformer: patch embedding width is embedding_dim.
  std::size_t blocks = 2;
  std::size_t mlp_dim = 128;

  double temperature = 0.2;
  std::size_t patch_len = 50;
  double mask_ratio = 0.5;
  std::size_t resolutions = 3;

  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double clip_threshold = 1.0;
  std::uint64_t seed = 42;

  AugmentConfig augment;  // view sampler for the contrastive families

  std::size_t patch_count() const { return kWindowLength / patch_len; }
  void validate() const;  // ValidationError naming the offending field
  bool operator==(const EncoderConfig&) const = default;
};

/// Round(mask_ratio * patch_count) patches drawn without replacement.
MaskPattern random_mask(std::size_t patch_count, std::size_t patch_len, double mask_ratio, SeededRng& rng);

/// K masks from a seeded rng, regenerating any pattern that repeats an
/// earlier one (when enough distinct patterns exist).
std::vector<MaskPattern> make_fixed_masks(std::size_t k, std::size_t patch_count, double mask_ratio,
                                          std::uint64_t seed);

class EncoderModel {
 public:
  /// Builds the family's layer stacks and draws initial weights from cfg.seed.
  explicit EncoderModel(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  const std::set<SubjectId>& train_subjects() const { return train_subjects_; }
  void set_train_subjects(std::set<SubjectId> subjects) { train_subjects_ = std::move(subjects); }

  /// (B, 1, 2000) windows to (B, embedding_dim).
  nn::Tensor encode_batch(const nn::Tensor& windows) const;
  std::vector<double> encode(std::span<const double> window) const;

  /// Full-length reconstruction of a masked window (MAE families only).
  std::vector<double> reconstruct(std::span<const double> window, const MaskPattern& mask) const;

  // Training pathways. Both return the batch loss and accumulate its
  // parameter gradient into `grads` (already sized by params().zero_gradients()).
  // Work is split into fixed shards evaluated on up to `threads` workers and
  // reduced in shard order, so results do not depend on the thread count.
  double contrastive_step(const nn::Tensor& view1, const nn::Tensor& view2, nn::Gradients& grads,
                          std::size_t threads = 1) const;
  double mae_step(const nn::Tensor& windows, std::span<const MaskPattern> masks, nn::Gradients& grads,
                  std::size_t threads = 1) const;

  struct Layout;

 private:
  struct ContrastiveTrace;
  struct MaeTrace;

  std::vector<nn::Tensor> contrastive_forward(const nn::Tensor& x, ContrastiveTrace* trace) const;
  void contrastive_backward(const ContrastiveTrace& trace, std::span<const nn::Tensor> grad_levels,
                            nn::Gradients& grads) const;
  nn::Tensor mae_forward(const nn::Tensor& x, std::span<const MaskPattern> masks, MaeTrace* trace) const;
  void mae_backward(const MaeTrace& trace, const nn::Tensor& grad_recon, nn::Gradients& grads) const;
  nn::Tensor transformer_tokens(const nn::Tensor& x, std::span<const MaskPattern> masks, MaeTrace* trace) const;

  EncoderConfig cfg_;
  nn::ParamSet params_;
  std::shared_ptr<const Layout> layout_;
  std::set<SubjectId> train_subjects_;
};

struct PretrainOptions {
  std::size_t threads = 1;
  std::filesystem::path train_ids_path;  // empty: do not write
  std::function<void(std::size_t epoch, double loss)> on_epoch;
};

struct PretrainResult {
  EncoderModel model;
  std::vector<double> epoch_losses;  // mean loss per epoch
};

PretrainResult pretrain(const EncoderConfig& cfg, const WindowSource& corpus, const std::set<SubjectId>& train_subjects,
                        const PretrainOptions& options = {});

void write_train_ids(const std::set<SubjectId>& subjects, const std::filesystem::path& path);
std::set<SubjectId> read_train_ids(const std::filesystem::path& path);

std::string encoder_config_json(const EncoderConfig& cfg);
EncoderConfig parse_encoder_config_json(const std::string& text);

/// "MIAMDL01" + config JSON + parameters in declaration order as f64 LE.
void write_checkpoint(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel read_checkpoint(const std::filesystem::path& path);

}  // namespace mia
