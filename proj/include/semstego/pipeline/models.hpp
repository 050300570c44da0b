#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semstego/core/config.hpp"
#include "semstego/diffusion/ddim.hpp"
#include "semstego/diffusion/train.hpp"
#include "semstego/metrics/metrics.hpp"
#include "semstego/pipeline/dataset.hpp"
#include "semstego/semcom/jscc.hpp"
#include "semstego/vae/vae.hpp"

namespace semstego::pipeline {

// Compact decimal form used in directory names and CSV cells ("10", "2.5", "-3").
std::string format_snr(double snr_db);

std::filesystem::path vae_dir(const RunConfig& cfg);
std::filesystem::path diffusion_dir(const RunConfig& cfg);
std::filesystem::path jscc_dir(const RunConfig& cfg, const std::string& codec, double snr_train_db);

const JsccCodecSettings& find_codec(const RunConfig& cfg, const std::string& name);

vae::VaeArchitecture vae_architecture(const RunConfig& cfg);
diffusion::PredictorArchitecture predictor_architecture(const RunConfig& cfg);
diffusion::NoiseSchedule noise_schedule(const RunConfig& cfg);
diffusion::KeyEmbedder key_embedder(const RunConfig& cfg);
metrics::LpipsConfig lpips_config(const RunConfig& cfg);
diffusion::GuidanceConfig guidance(const RunConfig& cfg);

// Private caption for a dataset image, from its class label.
keygen::KeyPrompt caption_key(const RunConfig& cfg, const ImageTensor& image);

// Posterior parameters scaled into diffusion space, keyed by caption.
diffusion::LatentDataset encode_latents(const vae::Vae& vae, const std::vector<ImageTensor>& images,
                                        const RunConfig& cfg, const diffusion::KeyEmbedder& embedder);

vae::Vae train_vae_model(const RunConfig& cfg, const Dataset& data);
diffusion::NoisePredictor train_diffusion_model(const RunConfig& cfg, const Dataset& data,
                                                const vae::Vae& vae);
semcom::JsccCodec train_jscc_model(const RunConfig& cfg, const Dataset& data,
                                   const std::string& codec, double snr_train_db);

// Everything the four pipeline stages need, loaded from models_dir.
struct Models {
  vae::Vae vae;
  diffusion::NoisePredictor predictor;
  diffusion::NoiseSchedule schedule;
  diffusion::KeyEmbedder embedder;
  metrics::FeatureExtractor extractor;

  diffusion::DiffusionModel diffusion() const { return {predictor, schedule, embedder}; }
};

// Throws NotFoundError when a model directory is missing.
Models load_models(const RunConfig& cfg);
semcom::JsccCodec load_jscc(const RunConfig& cfg, const std::string& codec, double snr_train_db);

struct EnsureReport {
  std::vector<std::string> trained;
  std::vector<std::string> reused;
};

// Loads each requested model from models_dir, training and saving any that
// is missing.
EnsureReport ensure_models(const RunConfig& cfg, const Dataset& data,
                           const std::vector<std::pair<std::string, double>>& codecs);

}  // namespace semstego::pipeline
