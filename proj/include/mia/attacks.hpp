#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mia/augment.hpp"
#include "mia/corpus.hpp"
#include "mia/encoders.hpp"
#include "mia/nn/sequential.hpp"

namespace mia {

struct WindowScore {
  SubjectId subject;
  std::size_t window_index = 0;
  double value = 0.0;  // higher = more member-like
};

using ReconstructFn = std::function<std::vector<double>(std::span<const double>, const MaskPattern&)>;
using EmbedFn = std::function<std::vector<double>(std::span<const double>)>;

/// -(1/K) sum_k mae_loss(x, reconstruct(x, m_k), m_k).
double score_rec(const ReconstructFn& reconstruct, std::span<const double> x, std::span<const MaskPattern> masks);
double score_rec(const EncoderModel& model, std::span<const double> x, std::span<const MaskPattern> masks);

/// Mean cosine similarity over K independently augmented view pairs.
double score_con(const EmbedFn& embed, std::span<const double> x, std::size_t k, const AugmentConfig& aug,
                 SeededRng& rng);
double score_con(const EncoderModel& model, std::span<const double> x, std::size_t k, const AugmentConfig& aug,
                 SeededRng& rng);

struct SubjectFeatureVector {
  double mean = 0.0;
  double std = 0.0;  // population
  double max = 0.0;
  double q90 = 0.0;  // nearest rank: element ceil(0.9 n) of the ascending sort

  std::array<double, 4> values() const { return {mean, std, max, q90}; }
  bool operator==(const SubjectFeatureVector&) const = default;
};

SubjectFeatureVector subject_features(std::span<const double> scores);

/// 4 -> 16 -> 1 relu MLP with a sigmoid output over standardized features.
class MlpAttacker {
 public:
  static constexpr std::size_t kInputs = 4;
  static constexpr std::size_t kHidden = 16;

  explicit MlpAttacker(std::uint64_t seed);
  static MlpAttacker zero();  // all weights zero, identity standardization

  double logit(const SubjectFeatureVector& v) const;
  double score(const SubjectFeatureVector& v) const;

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const nn::Sequential& network() const { return net_; }
  std::array<double, kInputs> feature_mean{0, 0, 0, 0};
  std::array<double, kInputs> feature_scale{1, 1, 1, 1};

  nn::Tensor standardize(std::span<const SubjectFeatureVector> features) const;

 private:
  nn::Sequential net_;
  nn::ParamSet params_;
};

/// Mean binary cross-entropy of sigmoid(logit) against labels; when `grads`
/// is non-null it receives the parameter gradient.
double mlp_bce(const MlpAttacker& attacker, std::span<const SubjectFeatureVector> features,
               std::span<const int> labels, nn::Gradients* grads = nullptr);

struct MlpTraining {
  MlpAttacker attacker;
  std::vector<double> losses;  // BCE before each step, then after the last
};

/// Full-batch Adam on BCE for a fixed number of steps.
MlpTraining train_mlp_attacker(std::span<const SubjectFeatureVector> features, std::span<const int> labels,
                               std::uint64_t seed, double lr = 1e-3, std::size_t steps = 200);

/// Mean embedding of up to `cap` windows, sampled without replacement when
/// there are more.
std::vector<double> subject_embedding(const EmbedFn& embed, std::span<const std::span<const double>> windows,
                                      std::size_t cap, SeededRng& rng);
std::vector<double> subject_embedding(const EncoderModel& model, std::span<const std::span<const double>> windows,
                                      std::size_t cap, SeededRng& rng);

struct ReferenceSet {
  std::vector<SubjectId> subjects;
  std::vector<std::vector<double>> embeddings;

  void add(SubjectId subject, std::vector<double> embedding);
  std::size_t size() const { return embeddings.size(); }
};

/// Negative mean Euclidean distance to the min(k, |refs|) nearest references,
/// skipping any reference that belongs to `self`.
double knn_score(std::span<const double> z, const ReferenceSet& refs, std::size_t k,
                 const std::optional<SubjectId>& self = std::nullopt);

/// CSV with header dataset_id,subject_key,window_index,score.
void write_score_dump(std::span<const WindowScore> scores, const std::filesystem::path& path);

}  // namespace mia
