#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "semstego/core/error.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/pipeline/dataset.hpp"
#include "semstego/vae/vae.hpp"

using namespace semstego;
using namespace semstego::vae;

namespace {

VaeArchitecture tiny_arch() {
  VaeArchitecture a;
  a.base_width = 4;
  return a;
}

LatentDistribution dist_of(double mu, double log_var, const Shape& shape = {1, 1, 1}) {
  return {Tensor(shape, mu), Tensor(shape, log_var)};
}

}  // namespace

TEST_CASE("closed-form KL oracles") {
  CHECK(kl_divergence(dist_of(0.0, 0.0)) == 0.0);
  CHECK(kl_divergence(dist_of(1.0, 0.0)) == 0.5);
  CHECK(kl_divergence(dist_of(1.0, 0.0, {4, 8, 8})) == doctest::Approx(0.5).epsilon(1e-15));
  // sigma^2 = e: 0.5 (e - 1 - 1).
  CHECK(kl_divergence(dist_of(0.0, 1.0)) == doctest::Approx(0.5 * (std::exp(1.0) - 2.0)).epsilon(1e-14));
}

TEST_CASE("reparameterization oracles") {
  const Tensor e({1, 1, 1}, 1.5);
  CHECK(reparameterize(dist_of(0.0, std::log(4.0)), e).values[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(reparameterize(dist_of(0.7, 2.0), Tensor({1, 1, 1}, 0.0)).values[0] == 0.7);
  CHECK(reparameterize(dist_of(0.7, 0.0), e).values[0] == doctest::Approx(2.2).epsilon(1e-15));
  CHECK_THROWS_AS(reparameterize(dist_of(0.0, 0.0), Tensor({2, 1, 1}, 0.0)), DimensionError);
}

TEST_CASE("vae loss oracles") {
  const Tensor x({1, 3, 4, 4}, 0.3);
  const VaeLoss zero = vae_loss(x, x, dist_of(0.0, 0.0, {1, 4, 1, 1}), 1.0);
  CHECK(zero.total == 0.0);
  const VaeLoss off = vae_loss(x, Tensor({1, 3, 4, 4}, 0.4), dist_of(1.0, 0.0, {1, 4, 1, 1}), 0.1);
  CHECK(off.reconstruction == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(off.kl == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(off.total == doctest::Approx(0.01 + 0.05).epsilon(1e-12));
  CHECK_THROWS_AS(vae_loss(x, Tensor({1, 3, 4, 5}, 0.3), dist_of(0.0, 0.0), 1.0), DimensionError);
}

TEST_CASE("encoder and decoder shape contracts") {
  const Vae v(VaeArchitecture{}, SeededRng(1, 0));
  const ImageTensor img = pipeline::dataset_image(pipeline::Split::test, 0, 32, 0);
  const LatentDistribution d = v.encode(img);
  CHECK(d.mu.shape() == Shape{4, 8, 8});
  CHECK(d.log_var.shape() == Shape{4, 8, 8});
  const LatentDistribution d2 = v.encode(img);
  CHECK(d2.mu == d.mu);
  CHECK(d2.log_var == d.log_var);
  const ImageTensor out = v.decode(LatentTensor{Tensor({4, 8, 8}, 0.0)});
  CHECK(out.pixels.shape() == Shape{3, 32, 32});
  CHECK(out.in_range());
  CHECK_THROWS_AS(v.encode(ImageTensor::from_tensor(Tensor({3, 30, 30}, 0.5))), DimensionError);
  CHECK_THROWS_AS(v.decode(LatentTensor{Tensor({3, 8, 8}, 0.0)}), DimensionError);
}

TEST_CASE("vae loss gradient matches finite differences") {
  Vae v(tiny_arch(), SeededRng(2, 0));
  SeededRng rng(3, 0);
  Tensor images({2, 3, 8, 8});
  for (double& p : images.values()) p = rng.uniform();
  const Tensor eps = gaussian_sample(rng, {2, 4, 2, 2});
  const double kl_weight = 0.1;

  v.params().zero_grad();
  nn::Var loss = vae_loss_graph(v, images, eps, kl_weight);
  loss.backward();

  const double h = 1e-6;
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& [name, var] : v.params().entries()) {
    const Tensor analytic = var.grad();
    Tensor& value = var.mutable_value();
    // A spread of entries per parameter keeps the check fast.
    const std::size_t stride = std::max<std::size_t>(1, value.size() / 7);
    for (std::size_t i = 0; i < value.size(); i += stride) {
      const double saved = value[i];
      double plus, minus;
      {
        nn::NoGradGuard guard;
        value[i] = saved + h;
        plus = vae_loss_graph(v, images, eps, kl_weight).value()[0];
        value[i] = saved - h;
        minus = vae_loss_graph(v, images, eps, kl_weight).value()[0];
      }
      value[i] = saved;
      const double numeric = (plus - minus) / (2 * h);
      const double scale = std::max({1e-4, std::abs(numeric), std::abs(analytic[i])});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
      ++checked;
    }
  }
  CHECK(checked > 50);
  CHECK(worst < 1e-4);
}

TEST_CASE("training: zero epochs, determinism, persistence") {
  std::vector<ImageTensor> train, val;
  for (std::size_t i = 0; i < 16; ++i) train.push_back(pipeline::dataset_image(pipeline::Split::train, i, 32, 0));
  for (std::size_t i = 0; i < 4; ++i) val.push_back(pipeline::dataset_image(pipeline::Split::validation, i, 32, 0));
  VaeTrainOptions opt;
  opt.settings.epochs = 0;
  const Vae untrained = train_vae(train, val, tiny_arch(), opt);
  CHECK(untrained.manifest["trained"] == false);
  const Vae fresh(tiny_arch(), SeededRng(0, make_stream_id(StreamStage::vae_init, 0)));
  for (const auto& [name, var] : untrained.params().entries()) CHECK(var.value() == fresh.params().at(name).value());

  opt.settings.epochs = 3;
  opt.settings.batch_size = 8;
  const Vae a = train_vae(train, val, tiny_arch(), opt);
  const Vae b = train_vae(train, val, tiny_arch(), opt);
  CHECK(a.manifest["trained"] == true);
  for (const auto& [name, var] : a.params().entries()) CHECK(var.value() == b.params().at(name).value());
  CHECK(a.latent_scale == b.latent_scale);
  CHECK(reconstruction_mse(a, val) < reconstruction_mse(untrained, val));

  const auto dir = std::filesystem::temp_directory_path() / "semstego_test_vae";
  std::filesystem::remove_all(dir);
  a.save(dir);
  const Vae c = Vae::load(dir);
  CHECK(c.latent_scale == a.latent_scale);
  CHECK(c.encode(val[0]).mu == a.encode(val[0]).mu);
  CHECK(reconstruction_mse(c, val) == reconstruction_mse(a, val));
  CHECK_THROWS_AS(Vae::load(dir / "missing"), Error);
}
