#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "semstego/core/error.hpp"
#include "semstego/nn/layers.hpp"
#include "semstego/pipeline/dataset.hpp"
#include "semstego/semcom/channel.hpp"
#include "semstego/semcom/jscc.hpp"

using namespace semstego;
using namespace semstego::semcom;

namespace {

JsccArchitecture tiny_arch() {
  JsccArchitecture a;
  a.width = 8;
  a.depth = 1;
  return a;
}

}  // namespace

TEST_CASE("noise variance follows the SNR definition") {
  CHECK(noise_variance(0.0) == 1.0);
  CHECK(noise_variance(10.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(noise_variance(20.0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(noise_variance(kNoiselessSnrDb) == 0.0);
  CHECK_THROWS_AS(noise_variance(std::nan("")), RangeError);
}

TEST_CASE("awgn calibration over 1e5 symbols") {
  for (double snr : {0.0, 10.0}) {
    CAPTURE(snr);
    SeededRng rng(1, make_stream_id(StreamStage::channel, 0));
    SeededRng src(2, 0);
    // Unit-power random-sign symbols.
    Tensor s({100000});
    for (double& v : s.values()) v = src.uniform() < 0.5 ? -1.0 : 1.0;
    const SymbolVector tx = SymbolVector::from_tensor(s);
    CHECK(tx.power == doctest::Approx(1.0));
    const SymbolVector rx = awgn_channel(tx, ChannelConfig{snr, 1.0, 0, 0}, rng);
    CHECK(std::abs(empirical_snr_db(tx.symbols, rx.symbols) - snr) < 0.1);
  }
}

TEST_CASE("noiseless cap is the identity") {
  SeededRng rng(3, 0);
  const Tensor s = gaussian_sample(rng, {64});
  SeededRng ch(4, 0);
  CHECK(awgn(s, 60.0, 1.0, ch) == s);
  CHECK(awgn(s, 100.0, 1.0, ch) == s);
  Tensor bad = s;
  bad[3] = INFINITY;
  CHECK_THROWS_AS(awgn(bad, 10.0, 1.0, ch), RangeError);
}

TEST_CASE("jscc symbol count and shape contracts") {
  JsccArchitecture a = tiny_arch();
  CHECK(a.symbol_count() == 256);
  CHECK(a.symbol_channels() == 4);
  a.ratio_den = 7;
  CHECK_THROWS_AS(a.symbol_count(), RangeError);

  const JsccCodec codec(tiny_arch(), SeededRng(1, 0));
  const ImageTensor img = pipeline::dataset_image(pipeline::Split::test, 0, 32, 0);
  const SymbolVector s = sem_encode(img, codec);
  CHECK(s.symbols.size() == 256);
  CHECK(std::abs(s.power - 1.0) <= 1e-6);
  CHECK(sem_encode(img, codec).symbols == s.symbols);

  const ImageTensor zero_out = sem_decode(SymbolVector::from_tensor(Tensor({256}, 0.0)), codec);
  CHECK(zero_out.pixels.shape() == Shape{3, 32, 32});
  CHECK(zero_out.in_range());
  CHECK_THROWS_AS(sem_decode(SymbolVector::from_tensor(Tensor({255}, 0.0)), codec), DimensionError);
  CHECK_THROWS_AS(sem_encode(ImageTensor::from_tensor(Tensor({3, 16, 16}, 0.5)), codec),
                  DimensionError);
}

TEST_CASE("power normalization is scale invariant") {
  SeededRng rng(6, 0);
  const Tensor x = gaussian_sample(rng, {2, 256});
  const Tensor a = nn::power_normalize(nn::Var(x)).value();
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    CHECK(relative_l2_error(nn::power_normalize(nn::Var(c * x)).value(), a) < 1e-14);
  }
}

TEST_CASE("jscc training, determinism and persistence") {
  std::vector<ImageTensor> train, val;
  for (std::size_t i = 0; i < 24; ++i) train.push_back(pipeline::dataset_image(pipeline::Split::train, i, 32, 0));
  for (std::size_t i = 0; i < 8; ++i) val.push_back(pipeline::dataset_image(pipeline::Split::validation, i, 32, 0));
  JsccTrainOptions opt;
  opt.settings.epochs = 4;
  opt.settings.batch_size = 8;
  const JsccCodec a = train_jscc(train, val, tiny_arch(), 10.0, opt);
  const JsccCodec b = train_jscc(train, val, tiny_arch(), 10.0, opt);
  for (const auto& [name, var] : a.params().entries()) CHECK(var.value() == b.params().at(name).value());
  CHECK(a.manifest["symbol_count"].get<std::size_t>() == 256);
  CHECK(a.manifest["compression_ratio"].get<std::string>() == "1/12");
  const auto& h = a.manifest["history"];
  CHECK(h.back()["val_mse"].get<double>() < h.front()["val_mse"].get<double>());

  const auto dir = std::filesystem::temp_directory_path() / "semstego_test_jscc";
  std::filesystem::remove_all(dir);
  a.save(dir);
  const JsccCodec c = JsccCodec::load(dir);
  CHECK(c.snr_train_db == 10.0);
  const ImageTensor img = val[0];
  CHECK(sem_encode(img, c).symbols == sem_encode(img, a).symbols);
  CHECK(evaluate_jscc_psnr(c, val, 10.0, 0, 1) == evaluate_jscc_psnr(a, val, 10.0, 0, 1));
  CHECK_THROWS_AS(train_jscc({}, val, tiny_arch(), 10.0, opt), RangeError);
}
