#include <cmath>
#include <functional>

#include "doctest.h"
#include "semstego/core/error.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/nn/autograd.hpp"
#include "semstego/nn/layers.hpp"

using namespace semstego;
using namespace semstego::nn;

namespace {

Var random_var(SeededRng& rng, const Shape& shape, double scale = 1.0) {
  return Var(scale * gaussian_sample(rng, shape), true);
}

// Central-difference check of d loss / d input for every input entry.
double max_gradient_error(const std::vector<Var>& inputs, const std::function<Var()>& loss_fn) {
  for (const Var& v : inputs) v.zero_grad();
  Var loss = loss_fn();
  loss.backward();
  double worst = 0.0;
  const double h = 1e-6;
  for (const Var& v : inputs) {
    const Tensor analytic = v.grad();
    Tensor& value = v.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      double plus, minus;
      {
        NoGradGuard guard;
        value[i] = saved + h;
        plus = loss_fn().value()[0];
        value[i] = saved - h;
        minus = loss_fn().value()[0];
      }
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = std::abs(numeric - analytic[i]) /
                         std::max({1e-3, std::abs(numeric), std::abs(analytic[i])});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// A fixed random projection turns any output into a scalar with a generic gradient.
Var project(const Var& out, std::uint64_t seed) {
  SeededRng rng(seed, 99);
  return sum(mul(out, Var(gaussian_sample(rng, out.shape()))));
}

}  // namespace

TEST_CASE("conv2d gradients") {
  SeededRng rng(1, 0);
  Var x = random_var(rng, {2, 3, 6, 6});
  Var w = random_var(rng, {4, 3, 3, 3}, 0.3);
  Var b = random_var(rng, {4});
  for (int stride : {1, 2}) {
    CAPTURE(stride);
    CHECK(max_gradient_error({x, w, b}, [&] { return project(conv2d(x, w, b, stride, 1), 5); }) <
          1e-5);
  }
  Var w4 = random_var(rng, {2, 3, 4, 4}, 0.3);
  CHECK(max_gradient_error({x, w4}, [&] { return project(conv2d(x, w4, Var(), 2, 1), 6); }) <
        1e-5);
}

TEST_CASE("conv2d matches a direct loop") {
  SeededRng rng(2, 0);
  Var x = random_var(rng, {1, 2, 5, 5});
  Var w = random_var(rng, {3, 2, 3, 3});
  Var b = random_var(rng, {3});
  const Tensor y = conv2d(x, w, b, 2, 1).value();
  REQUIRE(y.shape() == Shape{1, 3, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = b.value()[o];
        for (int c = 0; c < 2; ++c)
          for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
              const int r = i * 2 - 1 + di, s = j * 2 - 1 + dj;
              if (r < 0 || r >= 5 || s < 0 || s >= 5) continue;
              acc += w.value()[((o * 2 + c) * 3 + di) * 3 + dj] * x.value()[(c * 5 + r) * 5 + s];
            }
        CHECK(y[(o * 3 + i) * 3 + j] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv_transpose2d gradients and adjointness") {
  SeededRng rng(3, 0);
  Var x = random_var(rng, {2, 3, 4, 4});
  Var w = random_var(rng, {3, 2, 4, 4}, 0.3);
  Var b = random_var(rng, {2});
  const Var y = conv_transpose2d(x, w, b, 2, 1);
  CHECK(y.shape() == Shape{2, 2, 8, 8});
  CHECK(max_gradient_error({x, w, b}, [&] { return project(conv_transpose2d(x, w, b, 2, 1), 7); }) <
        1e-5);

  // <convT(x), u> == <x, conv(u)>: the (Cin, Cout) transposed weight is the
  // (Cout', Cin') weight of the adjoint convolution.
  Var u = random_var(rng, {2, 2, 8, 8});
  const double lhs = dot(conv_transpose2d(x, w, Var(), 2, 1).value(), u.value());
  const double rhs = dot(x.value(), conv2d(u, Var(w.value()), Var(), 2, 1).value());
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("linear and elementwise gradients") {
  SeededRng rng(4, 0);
  Var x = random_var(rng, {3, 5});
  Var w = random_var(rng, {5, 4});
  Var b = random_var(rng, {4});
  CHECK(max_gradient_error({x, w, b}, [&] { return project(silu(linear(x, w, b)), 1); }) < 1e-5);
  CHECK(max_gradient_error({x}, [&] { return project(sigmoid(x), 2); }) < 1e-5);
  CHECK(max_gradient_error({x}, [&] { return project(exp(scale(x, 0.5)), 3); }) < 1e-5);
  CHECK(max_gradient_error({x}, [&] { return project(mul(x, add_scalar(x, 1.0)), 4); }) < 1e-5);
  CHECK(max_gradient_error({x, w}, [&] { return mean(mul(linear(x, w, Var()), linear(x, w, Var()))); }) <
        1e-5);
}

TEST_CASE("channel ops gradients") {
  SeededRng rng(5, 0);
  Var a = random_var(rng, {2, 3, 4, 4});
  Var c = random_var(rng, {2, 2, 4, 4});
  Var v = random_var(rng, {2, 3});
  CHECK(max_gradient_error({a, c}, [&] { return project(concat_channels(a, c), 1); }) < 1e-5);
  CHECK(max_gradient_error({a}, [&] { return project(slice_channels(a, 1, 3), 2); }) < 1e-5);
  CHECK(max_gradient_error({a, v}, [&] { return project(add_channel_vector(a, v), 3); }) < 1e-5);
  const Tensor target = gaussian_sample(rng, {2, 3, 4, 4});
  CHECK(max_gradient_error({a}, [&] { return mse_loss(a, target); }) < 1e-5);
}

TEST_CASE("power_normalize yields unit power and correct gradients") {
  SeededRng rng(6, 0);
  Var x = random_var(rng, {3, 16}, 4.0);
  const Tensor y = power_normalize(x).value();
  for (std::size_t b = 0; b < 3; ++b) {
    double p = 0.0;
    for (std::size_t i = 0; i < 16; ++i) p += y[b * 16 + i] * y[b * 16 + i];
    CHECK(p / 16.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor y2 = power_normalize(Var(7.5 * x.value())).value();
  CHECK(relative_l2_error(y2, y) < 1e-14);
  CHECK(max_gradient_error({x}, [&] { return project(power_normalize(x), 3); }) < 1e-5);
}

TEST_CASE("cross attention reference value and gradients") {
  // Q = [1, 0], K = V = I, d = 2.
  Var x(Tensor({1, 2, 1, 1}, std::vector<double>{1.0, 0.0}));
  const Tensor e({2, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0});
  Var eye(Tensor({2, 2}, std::vector<double>{1.0, 0.0, 0.0, 1.0}));
  const Tensor out = cross_attention(x, {&e}, eye, eye, eye).value();
  const double a = std::exp(1.0 / std::sqrt(2.0));
  CHECK(out[0] == doctest::Approx(a / (a + 1.0)).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.0 / (a + 1.0)).epsilon(1e-12));
  CHECK(out[0] == doctest::Approx(0.6698).epsilon(1e-4));

  SeededRng rng(7, 0);
  Var xs = random_var(rng, {2, 3, 2, 2});
  const Tensor e0 = gaussian_sample(rng, {3, 5});
  const Tensor e1 = gaussian_sample(rng, {1, 5});
  Var wq = random_var(rng, {3, 4});
  Var wk = random_var(rng, {5, 4});
  Var wv = random_var(rng, {5, 3});
  CHECK(max_gradient_error({xs, wq, wk, wv}, [&] {
          return project(cross_attention(xs, {&e0, &e1}, wq, wk, wv), 8);
        }) < 1e-5);
}

TEST_CASE("no-grad guard records no graph") {
  Var x(Tensor({2}, 1.0), true);
  {
    NoGradGuard guard;
    Var y = scale(x, 2.0);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("param store declare, save, load, and adam") {
  ParamStore store(SeededRng(1, 0));
  Linear lin(store, "fc", 3, 2);
  store.seal();
  CHECK(store.parameter_count() == 8);
  const auto dir = std::filesystem::temp_directory_path() / "semstego_test_nn_params";
  std::filesystem::remove_all(dir);
  store.save(dir);
  ParamStore loaded = ParamStore::load(dir);
  CHECK(loaded.at("fc.weight").value() == store.at("fc.weight").value());
  Linear rebound(loaded, "fc", 3, 2);
  CHECK_THROWS_AS(Linear(loaded, "fc", 3, 3), DimensionError);
  CHECK_THROWS_AS(Linear(loaded, "other", 3, 2), NotFoundError);

  // Adam drives a least-squares fit toward zero loss.
  SeededRng rng(2, 0);
  const Tensor x = gaussian_sample(rng, {16, 3});
  const Tensor target = gaussian_sample(rng, {16, 2});
  Adam opt(store, AdamConfig{.learning_rate = 0.05});
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    Var loss = mse_loss(lin(Var(x)), target);
    if (step == 0) first = loss.value()[0];
    last = loss.value()[0];
    loss.backward();
    opt.step();
  }
  CHECK(last < first);
}
