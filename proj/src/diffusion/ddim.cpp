#include "semstego/diffusion/ddim.hpp"

#include <cmath>

#include "semstego/core/error.hpp"

namespace semstego::diffusion {

void GuidanceConfig::validate(int train_timesteps) const {
  if (!(beta >= 0.0)) throw RangeError("guidance beta must be >= 0");
  if (ddim_steps < 1 || ddim_steps > train_timesteps) {
    throw RangeError("ddim_steps must lie in [1, train_timesteps]");
  }
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw RangeError("sigma must lie in [0, 1]");
}

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double beta) {
  require_same_shape(eps_uncond, eps_cond, "cfg_combine");
  Tensor out(eps_uncond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - beta) * eps_uncond[i] + beta * eps_cond[i];
  }
  return out;
}

namespace {

void check_abar(double a, const char* what) {
  if (!(a > 0.0 && a <= 1.0)) throw RangeError(std::string(what) + " must lie in (0, 1]");
}

}  // namespace

double ddim_forward_step(double z_t, double abar_t, double abar_next, double eps_hat) {
  check_abar(abar_t, "abar_t");
  check_abar(abar_next, "abar_next");
  const double x0 = (z_t - std::sqrt(1.0 - abar_t) * eps_hat) / std::sqrt(abar_t);
  return std::sqrt(abar_next) * x0 + std::sqrt(1.0 - abar_next) * eps_hat;
}

Tensor ddim_forward_step(const Tensor& z_t, double abar_t, double abar_next,
                         const Tensor& eps_hat) {
  require_same_shape(z_t, eps_hat, "ddim_forward_step");
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ddim_forward_step(z_t[i], abar_t, abar_next, eps_hat[i]);
  }
  return out;
}

double ddim_reverse_step(double z_t, double abar_t, double abar_prev, double eps_hat,
                         double sigma_t, SeededRng* rng) {
  check_abar(abar_t, "abar_t");
  check_abar(abar_prev, "abar_prev");
  const double dir = 1.0 - abar_prev - sigma_t * sigma_t;
  if (dir < 0.0) throw RangeError("1 - abar_prev - sigma_t^2 must be non-negative");
  if (sigma_t > 0.0 && !rng) throw RangeError("stochastic reverse step needs an rng");
  const double x0 = (z_t - std::sqrt(1.0 - abar_t) * eps_hat) / std::sqrt(abar_t);
  double z = std::sqrt(abar_prev) * x0 + std::sqrt(dir) * eps_hat;
  if (sigma_t > 0.0) z += sigma_t * rng->normal();
  return z;
}

Tensor ddim_reverse_step(const Tensor& z_t, double abar_t, double abar_prev,
                         const Tensor& eps_hat, double sigma_t, SeededRng* rng) {
  require_same_shape(z_t, eps_hat, "ddim_reverse_step");
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ddim_reverse_step(z_t[i], abar_t, abar_prev, eps_hat[i], sigma_t, rng);
  }
  return out;
}

namespace {

Tensor guided_noise(const Tensor& z, int t, const std::vector<const TextEmbedding*>& keys,
                    const DiffusionModel& model, double beta) {
  const std::vector<int> ts(z.dim(0), t);
  NoisePredictor::Pair p = model.predictor.predict_pair(z, ts, keys);
  return cfg_combine(p.uncond, p.cond, beta);
}

std::vector<const TextEmbedding*> pointers(const Tensor& z, const std::vector<TextEmbedding>& keys) {
  if (z.rank() != 4 || keys.size() != z.dim(0)) {
    throw DimensionError("trajectory expects (B, C, H, W) latents and one key per item");
  }
  std::vector<const TextEmbedding*> out;
  for (const TextEmbedding& k : keys) out.push_back(&k);
  return out;
}

Tensor as_batch(const LatentTensor& z) {
  Shape s = z.values.shape();
  if (s.size() != 3) throw DimensionError("latent must have shape (C', H', W')");
  s.insert(s.begin(), 1);
  return z.values.reshaped(s);
}

}  // namespace

Tensor ddim_invert_batch(const Tensor& z0, const std::vector<TextEmbedding>& keys,
                         const DiffusionModel& model, const GuidanceConfig& cfg) {
  cfg.validate(model.schedule.train_timesteps);
  if (cfg.sigma != 0.0) throw RangeError("inversion is defined for sigma = 0 only");
  const auto key_ptrs = pointers(z0, keys);
  const auto nodes = ddim_trajectory_nodes(model.schedule.train_timesteps, cfg.ddim_steps);
  const auto& ab = model.schedule.alpha_bars;
  Tensor z = z0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const Tensor eps = guided_noise(z, nodes[i], key_ptrs, model, cfg.beta);
    z = ddim_forward_step(z, ab[nodes[i]], ab[nodes[i + 1]], eps);
  }
  return z;
}

Tensor ddim_sample_batch(const Tensor& z_T, const std::vector<TextEmbedding>& keys,
                         const DiffusionModel& model, const GuidanceConfig& cfg, SeededRng* rng) {
  cfg.validate(model.schedule.train_timesteps);
  const auto key_ptrs = pointers(z_T, keys);
  const auto nodes = ddim_trajectory_nodes(model.schedule.train_timesteps, cfg.ddim_steps);
  const auto& ab = model.schedule.alpha_bars;
  Tensor z = z_T;
  for (std::size_t i = nodes.size() - 1; i > 0; --i) {
    const double a_t = ab[nodes[i]], a_prev = ab[nodes[i - 1]];
    const double sigma_t =
        cfg.sigma * std::sqrt((1.0 - a_prev) / (1.0 - a_t)) * std::sqrt(1.0 - a_t / a_prev);
    const Tensor eps = guided_noise(z, nodes[i], key_ptrs, model, cfg.beta);
    z = ddim_reverse_step(z, a_t, a_prev, eps, sigma_t, rng);
  }
  return z;
}

LatentTensor ddim_invert(const LatentTensor& z0, const std::optional<keygen::KeyPrompt>& key,
                         const DiffusionModel& model, const GuidanceConfig& cfg) {
  const Tensor out =
      ddim_invert_batch(as_batch(z0), {embed_key(key, model.embedder)}, model, cfg);
  return LatentTensor{batch_item(out, 0)};
}

LatentTensor ddim_sample(const LatentTensor& z_T, const std::optional<keygen::KeyPrompt>& key,
                         const DiffusionModel& model, const GuidanceConfig& cfg) {
  const Tensor out =
      ddim_sample_batch(as_batch(z_T), {embed_key(key, model.embedder)}, model, cfg);
  return LatentTensor{batch_item(out, 0)};
}

LatentTensor hide(const LatentTensor& z_s, const keygen::KeyPrompt& k_priv,
                  const keygen::KeyPrompt& k_pub, const DiffusionModel& model,
                  const GuidanceConfig& cfg) {
  if (k_priv.text == k_pub.text) throw InvalidKeyError("hide requires distinct keys");
  return ddim_sample(ddim_invert(z_s, k_priv, model, cfg), k_pub, model, cfg);
}

LatentTensor reveal(const LatentTensor& z_stego, const keygen::KeyPrompt& k_pub,
                    const std::optional<keygen::KeyPrompt>& k_priv, const DiffusionModel& model,
                    const GuidanceConfig& cfg) {
  return ddim_sample(ddim_invert(z_stego, k_pub, model, cfg), k_priv, model, cfg);
}

}  // namespace semstego::diffusion
