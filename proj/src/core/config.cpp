#include "semstego/core/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "semstego/core/error.hpp"

namespace semstego {

void RunConfig::validate() const {
  if (ddim_steps < 1) throw RangeError("ddim_steps must be >= 1");
  if (ddim_steps > diffusion.train_timesteps) {
    throw RangeError("ddim_steps must not exceed train_timesteps");
  }
  if (!(guidance_scale >= 0.0)) throw RangeError("guidance_scale must be >= 0");
  if (!(sigma >= 0.0)) throw RangeError("sigma must be >= 0");
  for (double snr : snr_db_list) {
    if (!std::isfinite(snr)) throw RangeError("snr_db_list entries must be finite");
  }
  if (!std::isfinite(snr_train_db)) throw RangeError("snr_train_db must be finite");
  for (double snr : jscc.snr_train_list) {
    if (!std::isfinite(snr)) throw RangeError("snr_train_list entries must be finite");
  }
  if (image_channels != 1 && image_channels != 3) throw RangeError("image_channels must be 1 or 3");
  if (vae.downsample_factor == 0 || image_size < 8 || image_size % vae.downsample_factor != 0) {
    throw RangeError("image_size must be >= 8 and divisible by the downsample factor");
  }
  if (latent_channels == 0) throw RangeError("latent_channels must be positive");
  if (jscc.ratio_den == 0 || jscc.ratio_num == 0) throw RangeError("invalid compression ratio");
  if (!(diffusion.null_key_dropout >= 0.0 && diffusion.null_key_dropout <= 1.0)) {
    throw RangeError("null_key_dropout must lie in [0, 1]");
  }
  if (diffusion.conditioning != "additive" && diffusion.conditioning != "midblock") {
    throw RangeError("conditioning must be 'additive' or 'midblock'");
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const nlohmann::json doc = read_json_file(path);
  RunConfig config;
  try {
    config = doc.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  config.validate();
  return config;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  write_json_file(path, nlohmann::json(config));
}

}  // namespace semstego
