#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "semstego/core/array_io.hpp"
#include "semstego/core/error.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/core/tensor.hpp"

using namespace semstego;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "semstego_test_core";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("gaussian_sample determinism and stream separation") {
  SeededRng a(7, 0), b(7, 0), c(7, 1);
  const Tensor x = gaussian_sample(a, {2, 2});
  const Tensor y = gaussian_sample(b, {2, 2});
  const Tensor z = gaussian_sample(c, {2, 2});
  CHECK(x == y);
  CHECK_FALSE(x == z);
}

TEST_CASE("gaussian_sample moments over 1e6 draws") {
  SeededRng rng(2024, make_stream_id(StreamStage::generic, 3));
  const Tensor x = gaussian_sample(rng, {1000000});
  double m = 0.0;
  for (double v : x.values()) m += v;
  m /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x.values()) var += (v - m) * (v - m);
  var /= static_cast<double>(x.size());
  CHECK(std::abs(m) <= 0.01);
  CHECK(std::abs(var - 1.0) <= 0.02);
}

TEST_CASE("gaussian_sample rejects invalid shapes") {
  SeededRng rng(1, 0);
  CHECK_THROWS_AS(gaussian_sample(rng, {}), DimensionError);
  CHECK_THROWS_AS(gaussian_sample(rng, {3, 0}), DimensionError);
}

TEST_CASE("uniform draws stay in the open unit interval") {
  SeededRng rng(5, 9);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_index(7) < 7);
}

TEST_CASE("array round trip is bit exact") {
  SeededRng rng(3, 0);
  const Tensor image = gaussian_sample(rng, {3, 32, 32});
  const auto path = temp_path("image.arr");
  save_array(path, image);
  CHECK(load_array(path) == image);
  CHECK(load_array(path, {3, 32, 32}) == image);
  CHECK_THROWS_AS(load_array(path, {3, 16, 64}), DimensionError);
}

TEST_CASE("array round trip of an empty array") {
  const Tensor empty(Shape{0});
  const auto path = temp_path("empty.arr");
  save_array(path, empty);
  const Tensor back = load_array(path);
  CHECK(back.shape() == Shape{0});
  CHECK(back.size() == 0);
}

TEST_CASE("float32 arrays round trip through single precision") {
  const Tensor t({3}, std::vector<double>{0.5, -1.25, 3.0});
  CHECK(decode_array(encode_array(t, DType::float32)) == t);
}

TEST_CASE("array loader rejects damaged files") {
  SeededRng rng(3, 1);
  const Tensor t = gaussian_sample(rng, {4, 4});
  const std::string bytes = encode_array(t);

  const auto truncated = temp_path("truncated.arr");
  {
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  CHECK_THROWS_AS(load_array(truncated), CorruptDataError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_array(bad_magic), CorruptDataError);
  std::string bad_dtype = bytes;
  bad_dtype[5] = 9;
  CHECK_THROWS_AS(decode_array(bad_dtype), CorruptDataError);

  CHECK_THROWS_AS(load_array(temp_path("does_not_exist.arr")), IoError);
}

TEST_CASE("base64 round trip") {
  for (const std::string& s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)}) {
    CHECK(base64_decode(base64_encode(s)) == s);
  }
  CHECK(base64_encode("Man") == "TWFu");
  CHECK(base64_encode("Ma") == "TWE=");
}

TEST_CASE("image tensor validation and clamping") {
  Tensor px({3, 8, 8}, 0.5);
  px[0] = 1.5;
  px[1] = -0.2;
  const ImageTensor img = ImageTensor::from_tensor(px, "tree");
  CHECK(img.in_range());
  CHECK(img.pixels[0] == 1.0);
  CHECK(img.pixels[1] == 0.0);
  CHECK(img.clamped().pixels == img.pixels);
  CHECK_THROWS_AS(ImageTensor::from_tensor(Tensor({2, 8, 8})), DimensionError);
  CHECK_THROWS_AS(ImageTensor::from_tensor(Tensor({3, 4, 8})), DimensionError);
  Tensor nan_px({1, 8, 8}, 0.0);
  nan_px[3] = std::nan("");
  CHECK_THROWS_AS(ImageTensor::from_tensor(nan_px), RangeError);
}

TEST_CASE("tensor helpers") {
  const Tensor a({2}, std::vector<double>{3.0, 4.0});
  const Tensor b({2}, std::vector<double>{0.0, 0.0});
  CHECK(l2_norm(a) == doctest::Approx(5.0));
  CHECK(relative_l2_error(b, a) == doctest::Approx(1.0));
  const Tensor s = stack({a, a});
  CHECK(s.shape() == Shape{2, 2});
  CHECK(batch_item(s, 1) == a);
}
