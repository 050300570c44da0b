#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "semstego/core/error.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/metrics/metrics.hpp"

using namespace semstego;
using namespace semstego::metrics;

namespace {

ImageTensor constant(double v, std::size_t c = 3, std::size_t h = 16, std::size_t w = 16) {
  return ImageTensor::from_tensor(Tensor({c, h, w}, v));
}

ImageTensor random_image(SeededRng& rng, std::size_t c, std::size_t h, std::size_t w) {
  Tensor t({c, h, w});
  for (double& v : t.values()) v = rng.uniform();
  return ImageTensor::from_tensor(t);
}

// Single-window SSIM straight from the definition, with two-pass moments.
double ssim_window_reference(const double* x, const double* y, std::size_t stride, std::size_t r0,
                             std::size_t c0, std::size_t win) {
  const double c1 = 1e-4, c2 = 9e-4;
  const double n = static_cast<double>(win * win);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < win; ++i)
    for (std::size_t j = 0; j < win; ++j) {
      mx += x[(r0 + i) * stride + c0 + j];
      my += y[(r0 + i) * stride + c0 + j];
    }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cov = 0;
  for (std::size_t i = 0; i < win; ++i)
    for (std::size_t j = 0; j < win; ++j) {
      const double a = x[(r0 + i) * stride + c0 + j] - mx, b = y[(r0 + i) * stride + c0 + j] - my;
      vx += a * a;
      vy += b * b;
      cov += a * b;
    }
  vx /= n;
  vy /= n;
  cov /= n;
  const double lum = (2 * mx * my + c1) / (mx * mx + my * my + c1);
  const double cs = (2 * cov + c2) / (vx + vy + c2);
  return lum * cs;
}

}  // namespace

TEST_CASE("mse examples") {
  const ImageTensor a = constant(0.3);
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(a, constant(0.4)) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(mse(constant(0.0), constant(0.5)) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(mse(a, constant(0.3, 3, 8, 8)), DimensionError);
}

TEST_CASE("psnr examples and consistency") {
  CHECK(psnr_from_mse(0.01) == 20.0);
  CHECK(psnr_from_mse(0.25) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK(psnr_from_mse(0.25) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-15));
  const ImageTensor a = constant(0.2);
  CHECK(psnr(a, a) == kPsnrCapDb);
  CHECK(psnr_from_mse(1e-11) == kPsnrCapDb);
  CHECK(psnr(constant(0.0), constant(0.5)) == doctest::Approx(6.0206).epsilon(1e-5));
  SeededRng rng(3, 0);
  for (int i = 0; i < 20; ++i) {
    const ImageTensor x = random_image(rng, 3, 8, 8), y = random_image(rng, 3, 8, 8);
    const double m = mse(x, y);
    CHECK(psnr(x, y) == 10.0 * std::log10(1.0 / m));
  }
}

TEST_CASE("ssim oracles") {
  SeededRng rng(4, 0);
  const ImageTensor x = random_image(rng, 3, 16, 16);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  const double c1 = 1e-4;
  const double expected = c1 / (1.0 + c1);
  CHECK(ssim(constant(0.0, 1, 11, 11), constant(1.0, 1, 11, 11)) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(9.999e-5).epsilon(1e-4));

  for (int trial = 0; trial < 10; ++trial) {
    const ImageTensor a = random_image(rng, 1, 11, 11), b = random_image(rng, 1, 11, 11);
    const double ref = ssim_window_reference(a.pixels.data(), b.pixels.data(), 11, 0, 0, 11);
    CHECK(std::abs(ssim(a, b) - ref) < 1e-8);
  }

  // Sliding windows over a larger multi-channel image.
  const ImageTensor a = random_image(rng, 3, 14, 13), b = random_image(rng, 3, 14, 13);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t r = 0; r + 11 <= 14; ++r)
      for (std::size_t c = 0; c + 11 <= 13; ++c) {
        sum += ssim_window_reference(a.pixels.data() + ch * 14 * 13, b.pixels.data() + ch * 14 * 13,
                                     13, r, c, 11);
        ++count;
      }
  CHECK(std::abs(ssim(a, b) - sum / count) < 1e-8);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-10);
  CHECK(ssim(a, b) >= -1.0);
  CHECK(ssim(a, b) <= 1.0);

  CHECK_THROWS_AS(ssim(constant(0.1, 3, 8, 8), constant(0.1, 3, 8, 8)), DimensionError);
  SsimConfig even;
  even.window = 10;
  CHECK_THROWS_AS(ssim(x, x, even), RangeError);
}

TEST_CASE("lpips with the random convolutional extractor") {
  const FeatureExtractor phi = make_feature_extractor(LpipsConfig{});
  CHECK(phi.layer_count() == 3);
  SeededRng rng(5, 0);
  const ImageTensor x = random_image(rng, 3, 32, 32), y = random_image(rng, 3, 32, 32);
  CHECK(lpips_distance(x, x, phi) == 0.0);
  const double d = lpips_distance(x, y, phi);
  CHECK(d > 0.0);
  CHECK(lpips_distance(x, y, phi) == d);
  CHECK(lpips_distance(y, x, phi) == doctest::Approx(d).epsilon(1e-12));
  CHECK(lpips_distance(x, y, make_feature_extractor(LpipsConfig{})) == d);
  // Each layer term is bounded by 4 (squared distance of unit vectors).
  CHECK(d <= 12.0);

  const Tensor xs = stack({x.pixels, y.pixels}), ys = stack({y.pixels, y.pixels});
  const std::vector<double> batch = lpips_distance_batch(xs, ys, phi);
  CHECK(batch[0] == doctest::Approx(d).epsilon(1e-12));
  CHECK(batch[1] == 0.0);

  const auto dir = std::filesystem::temp_directory_path() / "semstego_test_lpips";
  std::filesystem::remove_all(dir);
  phi.save(dir);
  LpipsConfig external;
  external.backend = "external";
  external.external_dir = dir;
  CHECK(lpips_distance(x, y, make_feature_extractor(external)) == d);
  external.external_dir = dir / "missing";
  CHECK_THROWS_AS(make_feature_extractor(external), NotFoundError);

  LpipsConfig negative;
  negative.layer_weights = {1.0, -1.0, 1.0};
  CHECK_THROWS_AS(make_feature_extractor(negative), RangeError);
  LpipsConfig unknown;
  unknown.backend = "alexnet";
  CHECK_THROWS_AS(make_feature_extractor(unknown), RangeError);
}
