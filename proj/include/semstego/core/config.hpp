#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace semstego {

struct DatasetSettings {
  std::size_t train_size = 500;
  std::size_t validation_size = 50;
  std::size_t test_size = 100;
};

struct VaeSettings {
  std::size_t downsample_factor = 4;
  std::size_t base_width = 32;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 2e-3;
  double kl_weight = 1e-3;
};

struct DiffusionSettings {
  int train_timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t d_embed = 64;
  std::size_t attention_dim = 4;
  std::size_t base_width = 32;
  // "additive" adds cross attention to the backbone output; "midblock"
  // injects it at the U-Net bottleneck instead.
  std::string conditioning = "additive";
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  double learning_rate = 2e-3;
  double null_key_dropout = 0.1;
  // Exponential moving average of the weights; 0 keeps the raw weights.
  double ema_decay = 0.995;
  std::uint64_t embed_seed = 0x5eed;
};

struct JsccCodecSettings {
  std::string name = "small";
  std::size_t width = 32;
  std::size_t depth = 1;
};

struct JsccSettings {
  // Real channel symbols per real source value.
  std::size_t ratio_num = 1;
  std::size_t ratio_den = 12;
  std::vector<JsccCodecSettings> codecs{{"small", 32, 1}, {"wide", 64, 2}};
  std::vector<double> snr_train_list{0, 2, 4, 6, 8, 10};
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 2e-3;
};

struct RunConfig {
  std::size_t image_size = 32;
  std::size_t image_channels = 3;
  std::size_t latent_channels = 4;
  int ddim_steps = 50;
  double guidance_scale = 3.0;
  double sigma = 0.0;
  std::vector<double> snr_db_list{0, 2, 4, 6, 8, 10};
  std::uint64_t seed = 0;
  std::uint64_t channel_seed = 0;

  std::string captioner_backend = "template";     // template | remote
  std::string paraphraser_backend = "template";   // template | remote
  std::string feature_extractor_backend = "random_conv";  // random_conv | external
  std::string captioner_endpoint;
  std::string paraphraser_endpoint;
  std::string credentials_env = "SEMSTEGO_API_TOKEN";
  double remote_timeout_s = 10.0;
  std::string feature_extractor_dir;

  // Private caption -> public decoy caption.
  std::map<std::string, std::string> decoy_table{
      {"an Eiffel Tower", "a tree"}, {"a tree", "an Eiffel Tower"}, {"chimpanzee", "lion"},
      {"lion", "chimpanzee"},        {"cabin", "a person"},         {"a person", "cabin"}};
  // Dataset class label -> private caption.
  std::map<std::string, std::string> caption_table{
      {"eiffel_tower", "an Eiffel Tower"}, {"tree", "a tree"}, {"chimpanzee", "chimpanzee"},
      {"lion", "lion"},                    {"cabin", "cabin"}, {"person", "a person"}};

  std::string codec = "small";
  // JSCC training SNR used by single runs; sweeps take theirs from the grid.
  double snr_train_db = 10.0;
  std::string models_dir = "models";
  std::size_t eval_images = 100;

  DatasetSettings dataset;
  VaeSettings vae;
  DiffusionSettings diffusion;
  JsccSettings jscc;

  // Throws RangeError on violated invariants.
  void validate() const;
};

// JSON field names equal the member names; missing fields keep defaults.
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetSettings, train_size, validation_size,
                                                test_size)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VaeSettings, downsample_factor, base_width, epochs,
                                                batch_size, learning_rate, kl_weight)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DiffusionSettings, train_timesteps, beta_start,
                                                beta_end, d_embed, attention_dim, base_width,
                                                conditioning, epochs, batch_size, learning_rate,
                                                null_key_dropout, ema_decay, embed_seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(JsccCodecSettings, name, width, depth)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(JsccSettings, ratio_num, ratio_den, codecs,
                                                snr_train_list, epochs, batch_size, learning_rate)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, image_size, image_channels,
                                                latent_channels, ddim_steps, guidance_scale, sigma,
                                                snr_db_list, seed, channel_seed, captioner_backend,
                                                paraphraser_backend, feature_extractor_backend,
                                                captioner_endpoint, paraphraser_endpoint,
                                                credentials_env, remote_timeout_s,
                                                feature_extractor_dir, decoy_table, caption_table,
                                                codec, snr_train_db, models_dir, eval_images, dataset, vae,
                                                diffusion, jscc)

// Missing fields keep their defaults.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
// Writes text through a temporary file so readers never see partial output.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace semstego
