#pragma once

#include <string>
#include <vector>

#include "semstego/core/config.hpp"
#include "semstego/diffusion/embedding.hpp"
#include "semstego/diffusion/predictor.hpp"
#include "semstego/diffusion/schedule.hpp"

namespace semstego::diffusion {

// Diffusion-space training data: posterior parameters (N, C, H, W) already
// scaled into the diffusion latent space, and one embedding per item.
struct LatentDataset {
  Tensor mu;
  Tensor log_var;
  std::vector<TextEmbedding> keys;
};

struct DiffusionTrainOptions {
  DiffusionSettings settings;
  std::uint64_t seed = 0;
  std::string dataset_id = "synthetic";
};

// Epsilon-prediction squared error with t ~ U{1..T}; each item's key is
// replaced by the null embedding with probability null_key_dropout. Latents
// are redrawn from the posterior every epoch. Validation uses fixed (t, eps)
// draws on the posterior means.
NoisePredictor train_noise_predictor(const LatentDataset& train, const LatentDataset& validation,
                                     const NoiseSchedule& schedule,
                                     const PredictorArchitecture& arch,
                                     const DiffusionTrainOptions& options);

struct ValidationDraws {
  Tensor z_t;
  Tensor eps;
  std::vector<int> t;
};

ValidationDraws make_validation_draws(const LatentDataset& data, const NoiseSchedule& schedule,
                                      SeededRng& rng);
// Mean squared epsilon error of `predictor` on the draws.
double validation_loss(const NoisePredictor& predictor, const LatentDataset& data,
                       const ValidationDraws& draws);

}  // namespace semstego::diffusion
