#pragma once

// Shared helpers for the unit and acceptance suites.

#include <cmath>
#include <vector>

#include "mia/nn/gradcheck.hpp"
#include "mia/nn/layers.hpp"
#include "mia/rng.hpp"

namespace mia::testing {

inline nn::Tensor random_tensor(const nn::Shape& shape, SeededRng& rng, double scale = 1.0) {
  nn::Tensor t(shape);
  for (double& v : t.values()) {
    v = rng.uniform(-scale, scale);
  }
  return t;
}

/// Max relative finite-difference error of a layer's backward pass, using the
/// scalar probe loss sum(forward(x) * R) over the input and all parameters.
inline double layer_gradient_error(const nn::LayerSpec& layer, const nn::Shape& input_shape, std::uint64_t seed,
                                   std::size_t probes = 64) {
  SeededRng rng(seed, stream_id(layer.name));
  std::vector<nn::Tensor> tensors;
  tensors.push_back(random_tensor(input_shape, rng));
  for (const nn::Shape& s : layer.param_shapes()) {
    tensors.push_back(random_tensor(s, rng, 0.5));
  }
  if (layer.kind == nn::LayerKind::layernorm) {
    for (double& v : tensors[1].values()) {
      v += 1.0;
    }
  }
  const nn::Tensor probe = random_tensor(layer.output_shape(input_shape), rng);

  auto loss = [&](std::span<const nn::Tensor> xs, std::vector<nn::Tensor>* grads) {
    const auto params = xs.subspan(1);
    const nn::Tensor out = nn::layer_forward(layer, params, xs[0]);
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      total += out[i] * probe[i];
    }
    if (grads != nullptr) {
      nn::LayerGrad g = nn::layer_backward(layer, params, xs[0], probe);
      grads->clear();
      grads->push_back(std::move(g.input));
      for (auto& p : g.params) {
        grads->push_back(std::move(p));
      }
    }
    return total;
  };
  nn::GradCheckOptions options;
  options.probe_count = probes;
  options.seed = seed;
  return nn::finite_diff_check(loss, tensors, options);
}

/// Every layer kind with a small input shape, for the gradient suite.
inline std::vector<std::pair<nn::LayerSpec, nn::Shape>> gradient_suite_layers() {
  using nn::LayerSpec;
  return {
      {LayerSpec::conv1d("conv", 3, 4, 3, 2), {1, 3, 16}},
      {LayerSpec::linear("linear", 8, 5), {4, 8}},
      {LayerSpec::relu("relu"), {2, 3, 7}},
      {LayerSpec::maxpool1d("maxpool", 2, 2), {2, 3, 10}},
      {LayerSpec::avgpool1d("avgpool", 3, 2), {2, 3, 11}},
      {LayerSpec::global_avgpool("gap"), {2, 3, 9}},
      {LayerSpec::layernorm("layernorm", 6), {3, 6}},
      {LayerSpec::attention("attention", 4), {2, 5, 4}},
      {LayerSpec::patch_embed("patch", 5, 4), {2, 1, 20}},
  };
}

}  // namespace mia::testing

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace mia::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "mia") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mia::testing

#include <set>
#include <mutex>

#include "mia/corpus.hpp"
#include "mia/synth.hpp"

namespace mia::testing {

inline WindowCorpus synth_corpus(const std::string& dataset, std::size_t subjects, double duration_s,
                                 std::uint64_t seed) {
  SynthCohort cohort;
  cohort.dataset_id = dataset;
  cohort.subjects = subjects;
  cohort.duration_s = duration_s;
  const auto records = generate_cohort(cohort, seed);
  return build_corpus(records, {});
}

/// Forwards to a corpus and remembers every subject whose windows were read.
class AccessLog : public WindowSource {
 public:
  explicit AccessLog(const WindowSource& inner) : inner_(inner) {}
  std::vector<SubjectId> subjects() const override { return inner_.subjects(); }
  std::size_t window_count(const SubjectId& s) const override {
    record(s);
    return inner_.window_count(s);
  }
  std::span<const double> window(const SubjectId& s, std::size_t j) const override {
    record(s);
    return inner_.window(s, j);
  }
  std::set<SubjectId> touched() const {
    std::lock_guard lock(mutex_);
    return touched_;
  }

 private:
  void record(const SubjectId& s) const {
    std::lock_guard lock(mutex_);
    touched_.insert(s);
  }
  const WindowSource& inner_;
  mutable std::mutex mutex_;
  mutable std::set<SubjectId> touched_;
};

}  // namespace mia::testing
