#pragma once

#include <cstdint>
#include <optional>

#include "semstego/core/tensor.hpp"
#include "semstego/keygen/keygen.hpp"

namespace semstego::diffusion {

struct TextEmbedding {
  Tensor vectors;  // (tokens, d_embed)
  bool is_null = false;
};

// Hashes each token to a fixed unit-norm vector.
class KeyEmbedder {
 public:
  explicit KeyEmbedder(std::size_t d_embed = 64, std::uint64_t seed = 0x5eed)
      : d_embed_(d_embed), seed_(seed) {}

  std::size_t dim() const noexcept { return d_embed_; }
  std::uint64_t seed() const noexcept { return seed_; }

  TextEmbedding embed(const keygen::KeyPrompt& key) const;
  // The all-zero single-token embedding E_null.
  TextEmbedding null_embedding() const;
  Tensor token_vector(const std::string& token) const;

 private:
  std::size_t d_embed_;
  std::uint64_t seed_;
};

// A missing key yields the null embedding.
TextEmbedding embed_key(const std::optional<keygen::KeyPrompt>& key, const KeyEmbedder& embedder);

}  // namespace semstego::diffusion
