#include "semstego/diffusion/embedding.hpp"

#include <cmath>

#include "semstego/core/rng.hpp"

namespace semstego::diffusion {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Tensor KeyEmbedder::token_vector(const std::string& token) const {
  SeededRng rng(seed_ ^ fnv1a(token), make_stream_id(StreamStage::key_embedding, 0));
  Tensor v = gaussian_sample(rng, {d_embed_});
  const double n = l2_norm(v);
  for (double& x : v.values()) x /= n;
  return v;
}

TextEmbedding KeyEmbedder::embed(const keygen::KeyPrompt& key) const {
  if (key.tokens.empty()) return null_embedding();
  Tensor out({key.tokens.size(), d_embed_});
  for (std::size_t i = 0; i < key.tokens.size(); ++i) {
    const Tensor v = token_vector(key.tokens[i]);
    std::copy(v.data(), v.data() + d_embed_, out.data() + i * d_embed_);
  }
  return TextEmbedding{std::move(out), false};
}

TextEmbedding KeyEmbedder::null_embedding() const {
  return TextEmbedding{Tensor({1, d_embed_}, 0.0), true};
}

TextEmbedding embed_key(const std::optional<keygen::KeyPrompt>& key, const KeyEmbedder& embedder) {
  return key ? embedder.embed(*key) : embedder.null_embedding();
}

}  // namespace semstego::diffusion
