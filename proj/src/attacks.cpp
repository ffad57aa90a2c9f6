#include "mia/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "mia/error.hpp"
#include "mia/rng.hpp"

namespace mia {

namespace {

constexpr std::size_t kEncodeChunk = 32;

nn::Tensor window_batch(std::span<const std::span<const double>> windows) {
  nn::Tensor batch({windows.size(), 1, kWindowLength});
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].size() != kWindowLength) {
      throw ShapeError("window " + std::to_string(i) + " has " + std::to_string(windows[i].size()) + " samples");
    }
    std::copy(windows[i].begin(), windows[i].end(), batch.data() + i * kWindowLength);
  }
  return batch;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

double score_rec(const ReconstructFn& reconstruct, std::span<const double> x, std::span<const MaskPattern> masks) {
  if (masks.empty()) {
    throw std::invalid_argument("score_rec: at least one mask is required");
  }
  double total = 0.0;
  for (const MaskPattern& m : masks) {
    total += mae_loss(x, reconstruct(x, m), m);
  }
  return -total / static_cast<double>(masks.size());
}

double score_rec(const EncoderModel& model, std::span<const double> x, std::span<const MaskPattern> masks) {
  if (!is_mae(model.config().family)) {
    throw std::invalid_argument("score_rec: " + to_string(model.config().family) +
                                " has no reconstruction pathway");
  }
  return score_rec([&](std::span<const double> w, const MaskPattern& m) { return model.reconstruct(w, m); }, x,
                   masks);
}

double score_con(const EmbedFn& embed, std::span<const double> x, std::size_t k, const AugmentConfig& aug,
                 SeededRng& rng) {
  if (k == 0) {
    throw std::invalid_argument("score_con: K must be >= 1");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto a = sample_view(x, aug, rng);
    const auto b = sample_view(x, aug, rng);
    total += nn::cosine_sim(embed(a), embed(b));
  }
  return total / static_cast<double>(k);
}

double score_con(const EncoderModel& model, std::span<const double> x, std::size_t k, const AugmentConfig& aug,
                 SeededRng& rng) {
  if (!is_contrastive(model.config().family)) {
    throw std::invalid_argument("score_con: " + to_string(model.config().family) + " is not a contrastive encoder");
  }
  if (k == 0) {
    throw std::invalid_argument("score_con: K must be >= 1");
  }
  // Same draw order as the callable overload, encoded as one batch.
  std::vector<std::vector<double>> views;
  for (std::size_t i = 0; i < 2 * k; ++i) {
    views.push_back(sample_view(x, aug, rng));
  }
  std::vector<std::span<const double>> spans(views.begin(), views.end());
  const nn::Tensor z = model.encode_batch(window_batch(spans));
  const std::size_t dim = z.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    total += nn::cosine_sim(z.values().subspan(2 * i * dim, dim), z.values().subspan((2 * i + 1) * dim, dim));
  }
  return total / static_cast<double>(k);
}

SubjectFeatureVector subject_features(std::span<const double> scores) {
  if (scores.empty()) {
    throw std::invalid_argument("subject_features: no window scores");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  SubjectFeatureVector v;
  v.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double sq = 0.0;
  for (double s : sorted) {
    sq += (s - v.mean) * (s - v.mean);
  }
  v.std = std::sqrt(sq / n);
  v.max = sorted.back();
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * n));
  v.q90 = sorted[std::max<std::size_t>(rank, 1) - 1];
  return v;
}

MlpAttacker::MlpAttacker(std::uint64_t seed)
    : net_({nn::LayerSpec::linear("mlp.hidden", kInputs, kHidden), nn::LayerSpec::relu("mlp.relu"),
            nn::LayerSpec::linear("mlp.out", kHidden, 1)}) {
  SeededRng rng(seed, stream_id("mlp-attacker"));
  net_.register_params(params_, rng);
}

MlpAttacker MlpAttacker::zero() {
  MlpAttacker attacker(0);
  for (nn::Tensor& p : attacker.params_.all()) {
    p.fill(0.0);
  }
  return attacker;
}

nn::Tensor MlpAttacker::standardize(std::span<const SubjectFeatureVector> features) const {
  nn::Tensor x({features.size(), kInputs});
  for (std::size_t n = 0; n < features.size(); ++n) {
    const auto v = features[n].values();
    for (std::size_t i = 0; i < kInputs; ++i) {
      x[n * kInputs + i] = (v[i] - feature_mean[i]) / feature_scale[i];
    }
  }
  return x;
}

double MlpAttacker::logit(const SubjectFeatureVector& v) const {
  return net_.forward(params_, standardize(std::span(&v, 1)))[0];
}

// Saturated logits would round to exactly 0 or 1; keep the score inside (0, 1).
double MlpAttacker::score(const SubjectFeatureVector& v) const {
  return std::clamp(sigmoid(logit(v)), std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

double mlp_bce(const MlpAttacker& attacker, std::span<const SubjectFeatureVector> features,
               std::span<const int> labels, nn::Gradients* grads) {
  if (features.size() != labels.size() || features.empty()) {
    throw std::invalid_argument("mlp_bce: need one label per feature vector");
  }
  std::vector<nn::Tensor> trace;
  const nn::Tensor logits = attacker.network().forward(attacker.params(), attacker.standardize(features), &trace);
  const double inv = 1.0 / static_cast<double>(features.size());
  double loss = 0.0;
  nn::Tensor grad_logits(logits.shape());
  for (std::size_t n = 0; n < features.size(); ++n) {
    const double l = logits[n];
    const double y = labels[n] ? 1.0 : 0.0;
    loss += (softplus(l) - y * l) * inv;
    grad_logits[n] = (sigmoid(l) - y) * inv;
  }
  if (grads != nullptr) {
    *grads = attacker.params().zero_gradients();
    attacker.network().backward(attacker.params(), trace, grad_logits, *grads);
  }
  return loss;
}

MlpTraining train_mlp_attacker(std::span<const SubjectFeatureVector> features, std::span<const int> labels,
                               std::uint64_t seed, double lr, std::size_t steps) {
  if (features.size() != labels.size()) {
    throw std::invalid_argument("train_mlp_attacker: need one label per feature vector");
  }
  const auto positives = std::count_if(labels.begin(), labels.end(), [](int y) { return y != 0; });
  if (positives == 0 || static_cast<std::size_t>(positives) == labels.size()) {
    throw ValidationError("learned attacker needs both members and non-members in its training split");
  }
  MlpTraining out{MlpAttacker(seed), {}};
  MlpAttacker& a = out.attacker;
  const double n = static_cast<double>(features.size());
  for (std::size_t i = 0; i < MlpAttacker::kInputs; ++i) {
    double mean = 0.0;
    for (const auto& f : features) mean += f.values()[i];
    mean /= n;
    double sq = 0.0;
    for (const auto& f : features) sq += (f.values()[i] - mean) * (f.values()[i] - mean);
    const double std = std::sqrt(sq / n);
    a.feature_mean[i] = mean;
    a.feature_scale[i] = std > 0.0 ? std : 1.0;
  }
  const nn::AdamOptions adam{.lr = lr};
  nn::Gradients grads;
  for (std::size_t step = 0; step < steps; ++step) {
    out.losses.push_back(mlp_bce(a, features, labels, &grads));
    nn::adam_step(a.params(), grads, adam);
  }
  out.losses.push_back(mlp_bce(a, features, labels));
  return out;
}

std::vector<double> subject_embedding(const EmbedFn& embed, std::span<const std::span<const double>> windows,
                                      std::size_t cap, SeededRng& rng) {
  if (windows.empty()) {
    throw std::invalid_argument("subject_embedding: subject has no windows");
  }
  if (cap == 0) {
    throw std::invalid_argument("subject_embedding: window cap must be >= 1");
  }
  std::vector<std::size_t> chosen(windows.size());
  std::iota(chosen.begin(), chosen.end(), 0);
  if (windows.size() > cap) {
    chosen = rng.sample_without_replacement(windows.size(), cap);
    std::sort(chosen.begin(), chosen.end());
  }
  std::vector<double> sum;
  for (std::size_t idx : chosen) {
    const auto e = embed(windows[idx]);
    if (sum.empty()) {
      sum.assign(e.size(), 0.0);
    }
    for (std::size_t d = 0; d < e.size(); ++d) {
      sum[d] += e[d];
    }
  }
  for (double& v : sum) {
    v /= static_cast<double>(chosen.size());
  }
  return sum;
}

std::vector<double> subject_embedding(const EncoderModel& model, std::span<const std::span<const double>> windows,
                                      std::size_t cap, SeededRng& rng) {
  if (windows.empty()) {
    throw std::invalid_argument("subject_embedding: subject has no windows");
  }
  if (cap == 0) {
    throw std::invalid_argument("subject_embedding: window cap must be >= 1");
  }
  std::vector<std::size_t> chosen(windows.size());
  std::iota(chosen.begin(), chosen.end(), 0);
  if (windows.size() > cap) {
    chosen = rng.sample_without_replacement(windows.size(), cap);
    std::sort(chosen.begin(), chosen.end());
  }
  const std::size_t dim = model.config().embedding_dim;
  std::vector<double> sum(dim, 0.0);
  for (std::size_t begin = 0; begin < chosen.size(); begin += kEncodeChunk) {
    const std::size_t count = std::min(kEncodeChunk, chosen.size() - begin);
    std::vector<std::span<const double>> chunk;
    for (std::size_t i = 0; i < count; ++i) {
      chunk.push_back(windows[chosen[begin + i]]);
    }
    const nn::Tensor z = model.encode_batch(window_batch(chunk));
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        sum[d] += z[i * dim + d];
      }
    }
  }
  for (double& v : sum) {
    v /= static_cast<double>(chosen.size());
  }
  return sum;
}

void ReferenceSet::add(SubjectId subject, std::vector<double> embedding) {
  if (!embeddings.empty() && embedding.size() != embeddings.front().size()) {
    throw ShapeError("ReferenceSet: embedding dimension " + std::to_string(embedding.size()) + " differs from " +
                     std::to_string(embeddings.front().size()));
  }
  subjects.push_back(std::move(subject));
  embeddings.push_back(std::move(embedding));
}

double knn_score(std::span<const double> z, const ReferenceSet& refs, std::size_t k,
                 const std::optional<SubjectId>& self) {
  if (k == 0) {
    throw std::invalid_argument("knn_score: k must be >= 1");
  }
  std::vector<double> distances;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    if (self && refs.subjects[r] == *self) {
      continue;
    }
    const auto& ref = refs.embeddings[r];
    if (ref.size() != z.size()) {
      throw ShapeError("knn_score: query and reference dimensions differ");
    }
    double sq = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d) {
      sq += (z[d] - ref[d]) * (z[d] - ref[d]);
    }
    distances.push_back(std::sqrt(sq));
  }
  if (distances.empty()) {
    throw ValidationError("knn_score: reference set is empty");
  }
  const std::size_t used = std::min(k, distances.size());
  std::partial_sort(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(used), distances.end());
  double total = 0.0;
  for (std::size_t i = 0; i < used; ++i) {
    total += distances[i];
  }
  return -total / static_cast<double>(used);
}

void write_score_dump(std::span<const WindowScore> scores, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "dataset_id,subject_key,window_index,score\n" << std::setprecision(17);
  for (const WindowScore& s : scores) {
    out << s.subject.dataset_id << ',' << s.subject.subject_key << ',' << s.window_index << ',' << s.value << '\n';
  }
  detail::write_file(path, out.str());
}

}  // namespace mia
