#pragma once

#include "semstego/core/tensor.hpp"
#include "semstego/diffusion/embedding.hpp"

namespace semstego::diffusion {

struct ConditioningParams {
  Tensor w_q;  // (feature_dim, d)
  Tensor w_k;  // (d_embed, d)
  Tensor w_v;  // (d_embed, value_dim)
  std::size_t d() const { return w_q.dim(1); }
};

struct AttentionResult {
  Tensor output;   // (N, value_dim)
  Tensor weights;  // (N, tokens), rows sum to 1
};

// softmax(Q K^T / sqrt(d)) V with Q = z_feat W_q, K = E W_k, V = E W_v.
AttentionResult cross_attention(const Tensor& z_feat, const TextEmbedding& embedding,
                                const ConditioningParams& params);

}  // namespace semstego::diffusion
