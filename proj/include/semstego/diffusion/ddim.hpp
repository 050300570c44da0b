#pragma once

#include <optional>
#include <vector>

#include "semstego/core/rng.hpp"
#include "semstego/core/tensor.hpp"
#include "semstego/diffusion/embedding.hpp"
#include "semstego/diffusion/predictor.hpp"
#include "semstego/diffusion/schedule.hpp"
#include "semstego/keygen/keygen.hpp"

namespace semstego::diffusion {

struct GuidanceConfig {
  double beta = 3.0;
  int ddim_steps = 50;
  // Reverse-step stochasticity eta; sigma_t = eta * sqrt((1-a_prev)/(1-a_t)) * sqrt(1-a_t/a_prev).
  // Steganographic trajectories require 0.
  double sigma = 0.0;

  void validate(int train_timesteps) const;
};

// eps_uncond + beta * (eps_cond - eps_uncond), written so beta = 0 and 1 give the inputs exactly.
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double beta);

double ddim_forward_step(double z_t, double abar_t, double abar_next, double eps_hat);
Tensor ddim_forward_step(const Tensor& z_t, double abar_t, double abar_next, const Tensor& eps_hat);

// `rng` is required iff sigma_t > 0.
double ddim_reverse_step(double z_t, double abar_t, double abar_prev, double eps_hat,
                         double sigma_t = 0.0, SeededRng* rng = nullptr);
Tensor ddim_reverse_step(const Tensor& z_t, double abar_t, double abar_prev, const Tensor& eps_hat,
                         double sigma_t = 0.0, SeededRng* rng = nullptr);

// Everything a trajectory needs besides the guidance settings.
struct DiffusionModel {
  const NoisePredictor& predictor;
  const NoiseSchedule& schedule;
  const KeyEmbedder& embedder;
};

// Batched trajectories over (B, C, H, W) latents with one key embedding per item.
Tensor ddim_invert_batch(const Tensor& z0, const std::vector<TextEmbedding>& keys,
                         const DiffusionModel& model, const GuidanceConfig& cfg);
Tensor ddim_sample_batch(const Tensor& z_T, const std::vector<TextEmbedding>& keys,
                         const DiffusionModel& model, const GuidanceConfig& cfg,
                         SeededRng* rng = nullptr);

// A missing key conditions on the null embedding.
LatentTensor ddim_invert(const LatentTensor& z0, const std::optional<keygen::KeyPrompt>& key,
                         const DiffusionModel& model, const GuidanceConfig& cfg);
LatentTensor ddim_sample(const LatentTensor& z_T, const std::optional<keygen::KeyPrompt>& key,
                         const DiffusionModel& model, const GuidanceConfig& cfg);

// sample(invert(z_s, k_priv), k_pub).
LatentTensor hide(const LatentTensor& z_s, const keygen::KeyPrompt& k_priv,
                  const keygen::KeyPrompt& k_pub, const DiffusionModel& model,
                  const GuidanceConfig& cfg);
// sample(invert(z_stego, k_pub), k_priv); a missing private key means null conditioning.
LatentTensor reveal(const LatentTensor& z_stego, const keygen::KeyPrompt& k_pub,
                    const std::optional<keygen::KeyPrompt>& k_priv, const DiffusionModel& model,
                    const GuidanceConfig& cfg);

}  // namespace semstego::diffusion
