#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "mia/error.hpp"
#include "mia/nn/gradcheck.hpp"
#include "mia/nn/layers.hpp"
#include "mia/nn/optim.hpp"
#include "mia/nn/sequential.hpp"
#include "support.hpp"

using namespace mia;
using namespace mia::nn;

TEST_CASE("conv1d output length follows floor((L - K) / stride) + 1") {
  const auto layer = LayerSpec::conv1d("c", 1, 2, 7, 2);
  CHECK(layer.output_shape({1, 1, 2000}) == Shape{1, 2, 997});
  std::vector<Tensor> params{Tensor({2, 1, 7}, 0.1), Tensor({2}, 0.0)};
  CHECK(layer_forward(layer, params, Tensor({1, 1, 2000}, 1.0)).shape() == Shape{1, 2, 997});
}

TEST_CASE("relu forward and backward") {
  const auto layer = LayerSpec::relu();
  const Tensor x({3}, {-1.0, 0.0, 2.0});
  CHECK(layer_forward(layer, {}, x).vector() == std::vector<double>{0.0, 0.0, 2.0});
  const Tensor x2({2}, {-1.0, 2.0});
  const auto grad = layer_backward(layer, {}, x2, Tensor({2}, {1.0, 1.0}));
  CHECK(grad.input.vector() == std::vector<double>{0.0, 1.0});
}

TEST_CASE("identity conv1d kernel reproduces the input") {
  const auto layer = LayerSpec::conv1d("id", 1, 1, 1, 1);
  std::vector<Tensor> params{Tensor({1, 1, 1}, 1.0), Tensor({1}, 0.0)};
  SeededRng rng(3, 0);
  const Tensor x = testing::random_tensor({2, 1, 50}, rng);
  CHECK(layer_forward(layer, params, x) == x.reshaped({2, 1, 50}));
}

TEST_CASE("shape mismatch names the layer and the expected shape") {
  const auto layer = LayerSpec::conv1d("trunk.0", 3, 4, 3, 1);
  std::vector<Tensor> params{Tensor({4, 3, 3}), Tensor({4})};
  try {
    layer_forward(layer, params, Tensor({1, 2, 10}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("trunk.0") != std::string::npos);
    CHECK(msg.find("(B, 3, L)") != std::string::npos);
  }
  CHECK_THROWS_AS(layer_backward(layer, params, Tensor({1, 3, 10}), Tensor({1, 4, 7})), ShapeError);
  CHECK_THROWS_AS(LayerSpec::conv1d("bad", 1, 1, 0, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(LayerSpec::conv1d("bad", 1, 1, 3, 0).validate(), std::invalid_argument);
}

TEST_CASE("every layer kind passes the finite-difference gradient check") {
  for (const auto& [layer, shape] : testing::gradient_suite_layers()) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const double err = testing::layer_gradient_error(layer, shape, seed);
      INFO(layer.name << " seed " << seed << " error " << err);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("linear and conv1d gradients on the reference shapes") {
  CHECK(testing::layer_gradient_error(LayerSpec::linear("lin", 8, 3), {4, 8}, 11, 1000) < 1e-4);
  CHECK(testing::layer_gradient_error(LayerSpec::conv1d("conv", 3, 2, 5, 1), {1, 3, 16}, 12, 1000) < 1e-4);
}

TEST_CASE("layer_forward is deterministic") {
  const auto layer = LayerSpec::attention("att", 4);
  SeededRng rng(5, 0);
  std::vector<Tensor> params;
  for (const auto& s : layer.param_shapes()) {
    params.push_back(testing::random_tensor(s, rng));
  }
  const Tensor x = testing::random_tensor({2, 6, 4}, rng);
  const Tensor a = layer_forward(layer, params, x);
  const Tensor b = layer_forward(layer, params, x);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("sequential backward matches finite differences") {
  Sequential net({LayerSpec::conv1d("c0", 1, 3, 5, 2), LayerSpec::relu(), LayerSpec::conv1d("c1", 3, 4, 3, 2),
                  LayerSpec::relu(), LayerSpec::maxpool1d("mp", 2, 2), LayerSpec::global_avgpool(),
                  LayerSpec::linear("proj", 4, 3)});
  ParamSet params;
  SeededRng rng(7, 0);
  net.register_params(params, rng);
  const Tensor x = testing::random_tensor({2, 1, 40}, rng);
  const Tensor probe = testing::random_tensor(net.output_shape(x.shape()), rng);
  auto loss = [&](std::span<const Tensor> ps, std::vector<Tensor>* grads) {
    ParamSet local;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      local.add(params.name(i), ps[i]);
    }
    std::vector<Tensor> trace;
    const Tensor out = net.forward(local, x, &trace);
    if (grads != nullptr) {
      *grads = local.zero_gradients();
      net.backward(local, trace, probe, *grads);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      total += out[i] * probe[i];
    }
    return total;
  };
  std::vector<Tensor> values(params.all().begin(), params.all().end());
  CHECK(finite_diff_check(loss, values, {.probe_count = 200}) < 1e-4);
}

TEST_CASE("cosine similarity") {
  const std::vector<double> e1{1, 0}, e2{0, 1}, a{1, 2}, b{2, 4};
  CHECK(cosine_sim(e1, e2) == 0.0);
  CHECK(cosine_sim(a, b) == doctest::Approx(1.0).epsilon(1e-15));

  SeededRng rng(9, 0);
  std::vector<double> x(64), y(64);
  for (std::size_t i = 0; i < 64; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
  }
  // Oracle: normalize each vector first, then dot.
  const double nx = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
  const double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
  double oracle = 0.0;
  for (std::size_t i = 0; i < 64; ++i) {
    oracle += (x[i] / nx) * (y[i] / ny);
  }
  CHECK(std::abs(cosine_sim(x, y) - oracle) < 1e-12);
  CHECK(cosine_sim(x, y) == cosine_sim(y, x));
  std::vector<double> scaled = x;
  for (double& v : scaled) {
    v *= 3.7;
  }
  CHECK(std::abs(cosine_sim(scaled, y) - cosine_sim(x, y)) < 1e-12);

  const std::vector<double> zero(64, 0.0);
  CHECK(cosine_sim(zero, y) == 0.0);
  const std::vector<double> short_vec(3, 1.0);
  CHECK_THROWS_AS(cosine_sim(short_vec, y), ShapeError);
}

TEST_CASE("clip_global_norm") {
  SUBCASE("below threshold is unchanged") {
    std::vector<Tensor> g{Tensor({2}, {0.3, 0.4})};
    const auto before = g;
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(0.5));
    CHECK(g == before);
  }
  SUBCASE("norm 4 scales every entry by 0.25") {
    std::vector<Tensor> g{Tensor({2}, {2.0, 2.0}), Tensor({2}, {2.0, -2.0})};
    clip_global_norm(g, 1.0);
    CHECK(g[0].vector() == std::vector<double>{0.5, 0.5});
    CHECK(g[1].vector() == std::vector<double>{0.5, -0.5});
  }
  SUBCASE("random sets end within the threshold and clipping is idempotent") {
    SeededRng rng(13, 0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Tensor> g{testing::random_tensor({5, 3}, rng, 3.0), testing::random_tensor({7}, rng, 3.0)};
      clip_global_norm(g, 1.0);
      CHECK(global_norm(g) <= 1.0 + 1e-12);
      const auto once = g;
      clip_global_norm(g, 1.0);
      CHECK(g == once);
    }
  }
  std::vector<Tensor> g{Tensor({1}, 1.0)};
  CHECK_THROWS_AS(clip_global_norm(g, 0.0), std::invalid_argument);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamSet params;
    params.add("w", Tensor({3}, {1.0, -2.0, 0.5}));
    const Tensor before = params[0];
    for (int i = 0; i < 5; ++i) {
      adam_step(params, params.zero_gradients(), {});
    }
    CHECK(params[0] == before);
    CHECK(params.step() == 5);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    for (const double g : {0.37, -12.0}) {
      ParamSet params;
      params.add("w", Tensor({1}, 2.0));
      adam_step(params, {Tensor({1}, g)}, {.lr = 1e-3});
      CHECK(std::abs((params[0][0] - 2.0) - (-1e-3 * (g > 0 ? 1.0 : -1.0))) < 1e-6);
    }
  }
  SUBCASE("ten steps on a quadratic match an independent recurrence") {
    ParamSet params;
    params.add("w", Tensor({1}, 3.0));
    // Reference recurrence for f(w) = (w - 1)^2.
    double w = 3.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
      const double g = 2.0 * (w - 1.0);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      w -= 0.05 * mh / (std::sqrt(vh) + 1e-8);

      const double g_impl = 2.0 * (params[0][0] - 1.0);
      adam_step(params, {Tensor({1}, g_impl)}, {.lr = 0.05});
    }
    CHECK(std::abs(params[0][0] - w) < 1e-12);
  }
  ParamSet params;
  params.add("w", Tensor({2}));
  CHECK_THROWS_AS(adam_step(params, {Tensor({3})}, {}), ShapeError);
}

TEST_CASE("finite_diff_check") {
  SeededRng rng(21, 0);
  const Tensor features = testing::random_tensor({10, 3}, rng);
  const Tensor targets = testing::random_tensor({10}, rng);

  SUBCASE("linear regression loss") {
    auto loss = [&](std::span<const Tensor> ps, std::vector<Tensor>* grads) {
      const Tensor& w = ps[0];
      double total = 0.0;
      Tensor g({3});
      for (std::size_t n = 0; n < 10; ++n) {
        double pred = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
          pred += w[j] * features[n * 3 + j];
        }
        const double r = pred - targets[n];
        total += r * r / 10.0;
        for (std::size_t j = 0; j < 3; ++j) {
          g[j] += 2.0 * r * features[n * 3 + j] / 10.0;
        }
      }
      if (grads != nullptr) {
        *grads = {g};
      }
      return total;
    };
    CHECK(finite_diff_check(loss, {testing::random_tensor({3}, rng)}) < 1e-4);
  }
  SUBCASE("constant loss has zero error") {
    auto loss = [](std::span<const Tensor> ps, std::vector<Tensor>* grads) {
      if (grads != nullptr) {
        *grads = {Tensor::zeros_like(ps[0])};
      }
      return 4.2;
    };
    CHECK(finite_diff_check(loss, {Tensor({4}, 1.0)}) == 0.0);
  }
  SUBCASE("a doubled coordinate is caught") {
    auto loss = [](std::span<const Tensor> ps, std::vector<Tensor>* grads) {
      const Tensor& w = ps[0];
      double total = 0.0;
      Tensor g({4});
      for (std::size_t j = 0; j < 4; ++j) {
        total += std::sin(w[j]) * (j + 1.0);
        g[j] = std::cos(w[j]) * (j + 1.0);
      }
      g[2] *= 2.0;
      if (grads != nullptr) {
        *grads = {g};
      }
      return total;
    };
    CHECK(finite_diff_check(loss, {Tensor({4}, {0.1, 0.2, 0.3, 0.4})}) > 0.4);
  }
}
