#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mia/attacks.hpp"
#include "mia/error.hpp"
#include "support.hpp"

using namespace mia;
using mia::nn::Tensor;

namespace {

std::vector<double> normal_window(std::uint64_t seed) {
  SeededRng rng(seed, 3);
  std::vector<double> w(kWindowLength);
  for (double& v : w) v = rng.normal();
  return w;
}

std::vector<double> random_vector(std::size_t n, SeededRng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

bool same_bytes(const nn::ParamSet& a, const nn::ParamSet& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("score_rec: rigged reconstructors and the K-loop oracle") {
  const auto x = normal_window(1);
  const auto masks = make_fixed_masks(8, 40, 0.5, 42);
  const ReconstructFn perfect = [](std::span<const double> w, const MaskPattern&) {
    return std::vector<double>(w.begin(), w.end());
  };
  CHECK(score_rec(perfect, x, masks) == 0.0);

  EncoderConfig cfg;
  cfg.family = Family::mae_cnn;
  const EncoderModel model(cfg);
  double total = 0;
  for (const auto& m : masks) total += mae_loss(x, model.reconstruct(x, m), m);
  CHECK(std::abs(score_rec(model, x, masks) - (-total / 8)) < 1e-12);
  CHECK(score_rec(model, x, std::span(masks).first(1)) == -mae_loss(x, model.reconstruct(x, masks[0]), masks[0]));

  // Monotone: a reconstruction closer on every mask scores higher.
  const ReconstructFn half = [&](std::span<const double> w, const MaskPattern& m) {
    auto r = model.reconstruct(w, m);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = 0.5 * (r[i] + w[i]);
    return r;
  };
  CHECK(score_rec(half, x, masks) >= score_rec(model, x, masks));

  CHECK_THROWS_AS(score_rec(EncoderModel(EncoderConfig{}), x, masks), std::invalid_argument);
}

TEST_CASE("score_con: constant and identity cases, K-loop oracle, range") {
  const auto x = normal_window(2);
  AugmentConfig aug;
  const EmbedFn constant = [](std::span<const double>) { return std::vector<double>{0.3, -1.0, 2.0}; };
  SeededRng rng(1, 1);
  CHECK(score_con(constant, x, 8, aug, rng) == doctest::Approx(1.0).epsilon(1e-15));

  EncoderConfig cfg;
  const EncoderModel model(cfg);
  SeededRng r1(5, 5);
  CHECK(score_con(model, x, 4, AugmentConfig::identity(), r1) == doctest::Approx(1.0).epsilon(1e-12));

  // Explicit loop with the same rng draw order.
  SeededRng a(7, 7), b(7, 7);
  const double score = score_con(model, x, 8, aug, a);
  double total = 0;
  for (int k = 0; k < 8; ++k) {
    const auto v1 = sample_view(x, aug, b);
    const auto v2 = sample_view(x, aug, b);
    total += oracle_cosine(model.encode(v1), model.encode(v2));
  }
  CHECK(std::abs(score - total / 8) < 1e-12);
  CHECK(a == b);
  CHECK(score >= -1.0);
  CHECK(score <= 1.0);

  EncoderConfig mae;
  mae.family = Family::mae_transformer;
  SeededRng r2(1, 1);
  CHECK_THROWS_AS(score_con(EncoderModel(mae), x, 8, aug, r2), std::invalid_argument);
}

TEST_CASE("subject_features: nearest-rank q90 and population std") {
  const std::vector<double> zeros{0, 0, 0, 0};
  CHECK(subject_features(zeros) == SubjectFeatureVector{0, 0, 0, 0});

  std::vector<double> ten{7, 3, 10, 1, 5, 9, 2, 8, 4, 6};
  const auto v = subject_features(ten);
  CHECK(v.mean == 5.5);
  CHECK(v.std == doctest::Approx(std::sqrt(8.25)).epsilon(1e-15));
  CHECK(v.max == 10);
  CHECK(v.q90 == 9);

  const std::vector<double> one{-2.5};
  CHECK(subject_features(one) == SubjectFeatureVector{-2.5, 0, -2.5, -2.5});
  CHECK_THROWS_AS(subject_features({}), std::invalid_argument);

  SeededRng rng(3, 3);
  auto scores = random_vector(37, rng);
  const auto base = subject_features(scores);
  rng.shuffle(scores);
  const auto shuffled = subject_features(scores);
  CHECK(shuffled.max == base.max);
  CHECK(shuffled.q90 == base.q90);
  CHECK(std::abs(shuffled.mean - base.mean) < 1e-12);
  CHECK(std::abs(shuffled.std - base.std) < 1e-12);
  CHECK(base.mean <= base.max);
  CHECK(base.q90 <= base.max);
}

TEST_CASE("mlp attacker: zero weights, monotone path, determinism") {
  const MlpAttacker zero = MlpAttacker::zero();
  for (double s : {-1e6, -3.0, 0.0, 2.0, 1e6}) {
    CHECK(zero.score({s, 1, s, s}) == 0.5);
  }

  // One active path: hidden unit 0 reads feature 0 with weight 1, output weight 2.
  MlpAttacker hand = MlpAttacker::zero();
  hand.params()[0][0] = 1.0;
  hand.params()[2][0] = 2.0;
  double previous = 0.0;
  for (double f = 0.1; f < 3.0; f += 0.3) {
    const double s = hand.score({f, 0, 0, 0});
    CHECK(s > previous);
    previous = s;
  }

  const MlpAttacker seeded(42);
  const SubjectFeatureVector v{0.3, 0.1, 0.9, 0.8};
  CHECK(seeded.score(v) == MlpAttacker(42).score(v));
  for (double big : {-1e6, 1e6}) {
    const double s = hand.score({big, 0, 0, 0});
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("mlp attacker: BCE gradient matches finite differences") {
  SeededRng rng(11, 11);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<SubjectFeatureVector> features;
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) {
      features.push_back({rng.normal(), std::abs(rng.normal()), rng.normal() + 1, rng.normal()});
      labels.push_back(i % 2);
    }
    const MlpAttacker base(seed);
    auto loss = [&](std::span<const Tensor> params, std::vector<Tensor>* grads) {
      MlpAttacker a = base;
      for (std::size_t i = 0; i < params.size(); ++i) a.params()[i] = params[i];
      return mlp_bce(a, features, labels, grads);
    };
    const auto params = base.params().all();
    CHECK(nn::finite_diff_check(loss, {params.begin(), params.end()}) < 1e-4);
  }
}

TEST_CASE("mlp attacker: separable toy data is learned at seed 42") {
  std::vector<SubjectFeatureVector> features;
  std::vector<int> labels;
  SeededRng rng(42, 1);
  for (int i = 0; i < 20; ++i) {
    const int y = i % 2;
    const double c = y ? 2.0 : -2.0;
    features.push_back({c + 0.3 * rng.normal(), 1 + 0.1 * rng.normal(), c + 0.3 * rng.normal(), c});
    labels.push_back(y);
  }
  const MlpTraining run = train_mlp_attacker(features, labels, 42);
  REQUIRE(run.losses.size() == 201);
  CHECK(run.losses.back() < run.losses.front());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    correct += (run.attacker.score(features[i]) >= 0.5) == (labels[i] == 1);
  }
  CHECK(correct == features.size());
  CHECK(train_mlp_attacker(features, labels, 42).losses == run.losses);

  const std::vector<int> single(labels.size(), 1);
  CHECK_THROWS_AS(train_mlp_attacker(features, single, 42), ValidationError);
}

TEST_CASE("subject_embedding: mean of sampled windows") {
  std::vector<std::vector<double>> store;
  for (std::uint64_t i = 0; i < 6; ++i) store.push_back(normal_window(100 + i));
  std::vector<std::span<const double>> windows(store.begin(), store.end());

  EncoderConfig cfg;
  const EncoderModel model(cfg);
  SeededRng rng(1, 1);
  CHECK(subject_embedding(model, std::span(windows).first(1), 10, rng) == model.encode(windows[0]));

  const auto z = subject_embedding(model, windows, 10, rng);
  std::vector<double> oracle(cfg.embedding_dim, 0.0);
  for (const auto& w : windows) {
    const auto e = model.encode(w);
    for (std::size_t d = 0; d < e.size(); ++d) oracle[d] += e[d];
  }
  for (std::size_t d = 0; d < oracle.size(); ++d) CHECK(std::abs(z[d] - oracle[d] / 6) < 1e-12);

  std::vector<std::span<const double>> reversed(windows.rbegin(), windows.rend());
  const auto zr = subject_embedding(model, reversed, 10, rng);
  for (std::size_t d = 0; d < z.size(); ++d) CHECK(std::abs(z[d] - zr[d]) < 1e-12);

  // Capped: the callable and model paths pick the same windows.
  SeededRng c1(9, 9), c2(9, 9);
  const EmbedFn embed = [&](std::span<const double> w) { return model.encode(w); };
  const auto capped = subject_embedding(model, windows, 3, c1);
  const auto via_fn = subject_embedding(embed, windows, 3, c2);
  for (std::size_t d = 0; d < z.size(); ++d) CHECK(std::abs(capped[d] - via_fn[d]) < 1e-12);
}

TEST_CASE("knn_score: definition, exhaustive oracle, invariances") {
  ReferenceSet single;
  single.add({"a", "1"}, {3.0, 4.0});
  const std::vector<double> origin{0.0, 0.0};
  CHECK(knn_score(origin, single, 1) == -5.0);
  CHECK(knn_score(origin, single, 5) == -5.0);

  ReferenceSet with_self;
  with_self.add({"a", "1"}, {1.0, 2.0});
  with_self.add({"a", "2"}, {4.0, 2.0});
  const std::vector<double> q{1.0, 2.0};
  CHECK(knn_score(q, with_self, 1) == 0.0);
  CHECK(knn_score(q, with_self, 1, SubjectId{"a", "1"}) == -3.0);
  CHECK_THROWS_AS(knn_score(q, ReferenceSet{}, 5), ValidationError);

  SeededRng rng(20, 20);
  for (int trial = 0; trial < 10; ++trial) {
    ReferenceSet refs;
    for (int i = 0; i < 20; ++i) refs.add({"r", std::to_string(i)}, random_vector(8, rng));
    const auto z = random_vector(8, rng);
    std::vector<double> d;
    for (const auto& e : refs.embeddings) {
      double sq = 0;
      for (std::size_t i = 0; i < 8; ++i) sq += (z[i] - e[i]) * (z[i] - e[i]);
      d.push_back(std::sqrt(sq));
    }
    std::sort(d.begin(), d.end());
    const double oracle = -(d[0] + d[1] + d[2] + d[3] + d[4]) / 5;
    const double score = knn_score(z, refs, 5);
    CHECK(std::abs(score - oracle) < 1e-12);

    const auto shift = random_vector(8, rng);
    ReferenceSet moved;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      auto e = refs.embeddings[r];
      for (std::size_t i = 0; i < 8; ++i) e[i] += shift[i];
      moved.add(refs.subjects[r], e);
    }
    auto zs = z;
    for (std::size_t i = 0; i < 8; ++i) zs[i] += shift[i];
    CHECK(std::abs(knn_score(zs, moved, 5) - score) < 1e-12);
  }
}

TEST_CASE("attacks leave encoder parameters untouched") {
  const auto x = normal_window(9);
  const auto masks = make_fixed_masks(8, 40, 0.5, 42);
  for (Family f : {Family::simclr_cnn, Family::mae_transformer}) {
    EncoderConfig cfg;
    cfg.family = f;
    const EncoderModel model(cfg);
    const nn::ParamSet before = model.params();
    SeededRng rng(1, 1);
    if (is_mae(f)) {
      score_rec(model, x, masks);
    } else {
      score_con(model, x, 8, AugmentConfig{}, rng);
    }
    std::vector<std::span<const double>> windows{x};
    subject_embedding(model, windows, 4, rng);
    CHECK(same_bytes(before, model.params()));
  }
}

TEST_CASE("score dump CSV layout") {
  mia::testing::TempDir dir("dump");
  const std::vector<WindowScore> scores{{{"mitdb", "100"}, 0, -0.25}, {{"mitdb", "100"}, 3, 0.1}};
  write_score_dump(scores, dir / "s.csv");
  std::ifstream in(dir / "s.csv", std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text ==
        "dataset_id,subject_key,window_index,score\nmitdb,100,0,-0.25\nmitdb,100,3,0.10000000000000001\n");
}
