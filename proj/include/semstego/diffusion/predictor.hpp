#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/diffusion/attention.hpp"
#include "semstego/diffusion/embedding.hpp"
#include "semstego/nn/layers.hpp"

namespace semstego::diffusion {

enum class ConditioningMode { additive, midblock };

ConditioningMode parse_conditioning_mode(const std::string& name);
std::string conditioning_mode_name(ConditioningMode mode);

struct PredictorArchitecture {
  std::size_t latent_channels = 4;
  std::size_t base_width = 32;
  std::size_t d_embed = 64;
  // Query/key width of the cross attention.
  std::size_t attention_dim = 4;
  ConditioningMode mode = ConditioningMode::additive;
  // Timestep embedding frequency range in radians per training step.
  double time_max_frequency = 1.0 / 32.0;
  double time_min_frequency = 1.0 / 4000.0;
};

void to_json(nlohmann::json& j, const PredictorArchitecture& a);
void from_json(const nlohmann::json& j, PredictorArchitecture& a);

// Latent positions carry this many fixed positional features next to z_t
// when forming attention queries in additive mode.
inline constexpr std::size_t kPositionalFeatures = 4;

// epsilon_theta(z_t, t, E) = f_theta(z_t, t) + CrossAttn(z_t, E) in additive
// mode; in midblock mode the attention output is added to the U-Net
// bottleneck features instead.
class NoisePredictor {
 public:
  NoisePredictor(const PredictorArchitecture& arch, SeededRng init_rng);
  // Every weight zero: predicts zero noise for every input.
  static NoisePredictor zeros(const PredictorArchitecture& arch);
  static NoisePredictor load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  const PredictorArchitecture& architecture() const { return arch_; }

  // z (B, C, H, W); one timestep and one embedding per item.
  nn::Var forward(const nn::Var& z, const std::vector<int>& t,
                  const std::vector<const Tensor*>& embeddings) const;

  LatentTensor predict_noise(const LatentTensor& z, int t, const TextEmbedding& e) const;

  struct Pair {
    Tensor uncond;
    Tensor cond;
  };
  // Unconditional (null key) and conditional predictions for a batch.
  Pair predict_pair(const Tensor& z, const std::vector<int>& t,
                    const std::vector<const TextEmbedding*>& cond) const;

  // The attention projections of the conditioning path.
  ConditioningParams conditioning() const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  nlohmann::json manifest = nlohmann::json::object();

 private:
  struct ResBlock {
    nn::Conv2d conv1, conv2, skip;
    nn::Linear time_proj;
    bool has_skip = false;
    nn::Var operator()(const nn::Var& x, const nn::Var& temb) const;
  };

  NoisePredictor(const PredictorArchitecture& arch, nn::ParamStore store);
  void build();
  ResBlock make_block(const std::string& name, std::size_t cin, std::size_t cout);
  nn::Var backbone(const nn::Var& z, const std::vector<int>& t,
                   const std::vector<const Tensor*>* mid_embeddings) const;
  nn::Var attention_features(const nn::Var& z) const;

  PredictorArchitecture arch_;
  nn::ParamStore store_;
  std::size_t time_dim_ = 0;
  nn::Linear time1_, time2_;
  nn::Conv2d in_conv_, down1_, down2_, out_conv_;
  nn::ConvTranspose2d up1_, up2_;
  ResBlock block_hi_, block_mid_in_, block_lo_, block_mid_out_, block_up_lo_, block_up_hi_;
  nn::Var w_q_, w_k_, w_v_;
};

}  // namespace semstego::diffusion
