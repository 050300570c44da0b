#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semstego/core/config.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/core/tensor.hpp"
#include "semstego/nn/layers.hpp"

namespace semstego::vae {

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

// Diagonal Gaussian posterior. Single item (C', H', W') or a batch (B, C', H', W').
struct LatentDistribution {
  Tensor mu;
  Tensor log_var;
};

struct VaeArchitecture {
  std::size_t image_channels = 3;
  std::size_t latent_channels = 4;
  std::size_t downsample_factor = 4;
  std::size_t base_width = 32;
};

void to_json(nlohmann::json& j, const VaeArchitecture& a);
void from_json(const nlohmann::json& j, VaeArchitecture& a);

class Vae {
 public:
  Vae(const VaeArchitecture& arch, SeededRng init_rng);

  static Vae load(const std::filesystem::path& dir);
  // Parameter arrays plus manifest.json.
  void save(const std::filesystem::path& dir) const;

  const VaeArchitecture& architecture() const { return arch_; }
  Shape latent_shape(std::size_t height, std::size_t width) const;

  struct Encoded {
    nn::Var mu;
    nn::Var log_var;  // clamped to [kLogVarMin, kLogVarMax]
  };
  // x (B, C, H, W) -> mu, log_var (B, C', H/f, W/f).
  Encoded encode_graph(const nn::Var& x) const;
  // z (B, C', H', W') -> image (B, C, f H', f W') in (0, 1).
  nn::Var decode_graph(const nn::Var& z) const;

  LatentDistribution encode(const ImageTensor& x) const;
  LatentDistribution encode_batch(const Tensor& images) const;
  ImageTensor decode(const LatentTensor& z) const;
  Tensor decode_batch(const Tensor& latents) const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  // Multiplier mapping posterior samples to roughly unit-variance diffusion latents.
  double latent_scale = 1.0;
  nlohmann::json manifest = nlohmann::json::object();

 private:
  Vae(const VaeArchitecture& arch, nn::ParamStore store);
  void build();
  void check_image_shape(const Shape& shape) const;

  VaeArchitecture arch_;
  nn::ParamStore store_;
  std::vector<nn::Conv2d> enc_convs_;
  std::vector<nn::Conv2d> enc_down_;
  nn::Conv2d enc_in_, enc_out_;
  nn::Conv2d dec_in_, dec_mid_, dec_out_;
  std::vector<nn::ConvTranspose2d> dec_up_;
  std::vector<nn::Conv2d> dec_convs_;
};

// z = mu + exp(0.5 log_var) * eps.
LatentTensor reparameterize(const LatentDistribution& dist, const Tensor& eps);

// 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2) / N over all N latent entries.
double kl_divergence(const LatentDistribution& dist);

struct VaeLoss {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

VaeLoss vae_loss(const Tensor& x, const Tensor& x_hat, const LatentDistribution& dist,
                 double kl_weight);

// Differentiable loss for a batch with fixed reparameterisation noise.
nn::Var vae_loss_graph(const Vae& vae, const Tensor& images, const Tensor& eps, double kl_weight);

struct VaeTrainOptions {
  VaeSettings settings;
  std::uint64_t seed = 0;
  std::string dataset_id = "synthetic";
};

// Adam on MSE + kl_weight * KL. Throws TrainingDivergedError on a non-finite loss.
Vae train_vae(const std::vector<ImageTensor>& train, const std::vector<ImageTensor>& validation,
              const VaeArchitecture& arch, const VaeTrainOptions& options);

// Mean per-pixel MSE of decode(encode(x).mu).
double reconstruction_mse(const Vae& vae, const std::vector<ImageTensor>& images);

Tensor stack_images(const std::vector<ImageTensor>& images);

}  // namespace semstego::vae
