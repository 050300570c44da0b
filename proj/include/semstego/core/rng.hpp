#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "semstego/core/tensor.hpp"

namespace semstego {

// Stream ids are (stage << 32) | item index. Every stochastic consumer in the
// library owns one stage tag so that draws never collide across stages.
enum class StreamStage : std::uint32_t {
  generic = 0,
  dataset = 1,
  vae_init = 2,
  vae_train = 3,
  vae_sample = 4,
  diffusion_init = 5,
  diffusion_train = 6,
  diffusion_validation = 7,
  jscc_init = 8,
  jscc_train = 9,
  channel = 10,
  decoy = 11,
  lpips_extractor = 12,
  key_embedding = 13,
  reverse_sampling = 14,
  pipeline_latent = 15,
};

constexpr std::uint64_t make_stream_id(StreamStage stage, std::uint32_t index) {
  return (static_cast<std::uint64_t>(stage) << 32) | index;
}

// Counter-based generator (Philox4x32-10) keyed by the seed. The stream id
// occupies the upper half of the counter, so distinct stream ids address
// disjoint counter ranges and can never overlap.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1) with 53-bit resolution.
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  // Same seed, another stream.
  SeededRng derive(std::uint64_t stream_id) const { return SeededRng(seed_, stream_id); }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int block_pos_ = 4;
  std::optional<double> spare_normal_;
};

// I.i.d. N(0, 1) draws; every shape entry must be positive.
Tensor gaussian_sample(SeededRng& rng, const Shape& shape);

// Philox4x32-10 block function, exposed for tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

}  // namespace semstego
