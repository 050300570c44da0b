#include "semstego/pipeline/models.hpp"

#include <cmath>
#include <cstdio>

#include "semstego/core/error.hpp"

namespace semstego::pipeline {

namespace fs = std::filesystem;

std::string format_snr(double snr_db) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", snr_db == 0.0 ? 0.0 : snr_db);
  return buf;
}

fs::path vae_dir(const RunConfig& cfg) { return fs::path(cfg.models_dir) / "vae"; }
fs::path diffusion_dir(const RunConfig& cfg) { return fs::path(cfg.models_dir) / "diffusion"; }
fs::path jscc_dir(const RunConfig& cfg, const std::string& codec, double snr_train_db) {
  return fs::path(cfg.models_dir) / "jscc" / (codec + "_snr" + format_snr(snr_train_db));
}

const JsccCodecSettings& find_codec(const RunConfig& cfg, const std::string& name) {
  for (const JsccCodecSettings& c : cfg.jscc.codecs) {
    if (c.name == name) return c;
  }
  throw NotFoundError("no JSCC codec named '" + name + "' in the configuration");
}

vae::VaeArchitecture vae_architecture(const RunConfig& cfg) {
  vae::VaeArchitecture a;
  a.image_channels = cfg.image_channels;
  a.latent_channels = cfg.latent_channels;
  a.downsample_factor = cfg.vae.downsample_factor;
  a.base_width = cfg.vae.base_width;
  return a;
}

diffusion::PredictorArchitecture predictor_architecture(const RunConfig& cfg) {
  diffusion::PredictorArchitecture a;
  a.latent_channels = cfg.latent_channels;
  a.base_width = cfg.diffusion.base_width;
  a.d_embed = cfg.diffusion.d_embed;
  a.attention_dim = cfg.diffusion.attention_dim;
  a.mode = diffusion::parse_conditioning_mode(cfg.diffusion.conditioning);
  return a;
}

diffusion::NoiseSchedule noise_schedule(const RunConfig& cfg) {
  return diffusion::make_schedule(cfg.diffusion.train_timesteps, cfg.diffusion.beta_start,
                                  cfg.diffusion.beta_end);
}

diffusion::KeyEmbedder key_embedder(const RunConfig& cfg) {
  return diffusion::KeyEmbedder(cfg.diffusion.d_embed, cfg.diffusion.embed_seed);
}

metrics::LpipsConfig lpips_config(const RunConfig& cfg) {
  metrics::LpipsConfig l;
  l.backend = cfg.feature_extractor_backend;
  l.external_dir = cfg.feature_extractor_dir;
  return l;
}

diffusion::GuidanceConfig guidance(const RunConfig& cfg) {
  diffusion::GuidanceConfig g;
  g.beta = cfg.guidance_scale;
  g.ddim_steps = cfg.ddim_steps;
  g.sigma = cfg.sigma;
  return g;
}

keygen::KeyPrompt caption_key(const RunConfig& cfg, const ImageTensor& image) {
  if (!image.label) throw InvalidKeyError("image has no class label to caption");
  const auto it = cfg.caption_table.find(*image.label);
  if (it == cfg.caption_table.end()) {
    throw InvalidKeyError("no caption for class label '" + *image.label + "'");
  }
  return keygen::KeyPrompt::from_text(it->second);
}

diffusion::LatentDataset encode_latents(const vae::Vae& vae, const std::vector<ImageTensor>& images,
                                        const RunConfig& cfg,
                                        const diffusion::KeyEmbedder& embedder) {
  diffusion::LatentDataset out;
  if (images.empty()) return out;
  const vae::LatentDistribution d = vae.encode_batch(vae::stack_images(images));
  out.mu = vae.latent_scale * d.mu;
  out.log_var = d.log_var;
  const double shift = 2.0 * std::log(vae.latent_scale);
  for (double& v : out.log_var.values()) v += shift;
  for (const ImageTensor& img : images) out.keys.push_back(embedder.embed(caption_key(cfg, img)));
  return out;
}

vae::Vae train_vae_model(const RunConfig& cfg, const Dataset& data) {
  vae::VaeTrainOptions opt;
  opt.settings = cfg.vae;
  opt.seed = cfg.seed;
  opt.dataset_id = data.id;
  return vae::train_vae(data.train, data.validation, vae_architecture(cfg), opt);
}

diffusion::NoisePredictor train_diffusion_model(const RunConfig& cfg, const Dataset& data,
                                                const vae::Vae& vae) {
  const diffusion::KeyEmbedder embedder = key_embedder(cfg);
  diffusion::DiffusionTrainOptions opt;
  opt.settings = cfg.diffusion;
  opt.seed = cfg.seed;
  opt.dataset_id = data.id;
  diffusion::NoisePredictor p = diffusion::train_noise_predictor(
      encode_latents(vae, data.train, cfg, embedder),
      encode_latents(vae, data.validation, cfg, embedder), noise_schedule(cfg),
      predictor_architecture(cfg), opt);
  p.manifest["embed_seed"] = cfg.diffusion.embed_seed;
  p.manifest["d_embed"] = cfg.diffusion.d_embed;
  return p;
}

semcom::JsccCodec train_jscc_model(const RunConfig& cfg, const Dataset& data,
                                   const std::string& codec, double snr_train_db) {
  semcom::JsccTrainOptions opt;
  opt.settings = cfg.jscc;
  opt.seed = cfg.seed;
  opt.dataset_id = data.id;
  const semcom::JsccArchitecture arch = semcom::make_jscc_architecture(
      find_codec(cfg, codec), cfg.jscc, cfg.image_channels, cfg.image_size);
  return semcom::train_jscc(data.train, data.validation, arch, snr_train_db, opt);
}

namespace {

void require_dir(const fs::path& dir, const std::string& what) {
  if (!fs::exists(dir / "manifest.json")) {
    throw NotFoundError(what + " not found in " + dir.string() + "; train it first");
  }
}

}  // namespace

Models load_models(const RunConfig& cfg) {
  require_dir(vae_dir(cfg), "VAE");
  require_dir(diffusion_dir(cfg), "noise predictor");
  return Models{vae::Vae::load(vae_dir(cfg)), diffusion::NoisePredictor::load(diffusion_dir(cfg)),
                noise_schedule(cfg), key_embedder(cfg),
                metrics::make_feature_extractor(lpips_config(cfg), cfg.image_channels)};
}

semcom::JsccCodec load_jscc(const RunConfig& cfg, const std::string& codec, double snr_train_db) {
  const fs::path dir = jscc_dir(cfg, codec, snr_train_db);
  require_dir(dir, "JSCC codec '" + codec + "' at " + format_snr(snr_train_db) + " dB");
  return semcom::JsccCodec::load(dir);
}

EnsureReport ensure_models(const RunConfig& cfg, const Dataset& data,
                           const std::vector<std::pair<std::string, double>>& codecs) {
  EnsureReport report;
  std::optional<vae::Vae> vae;
  if (fs::exists(vae_dir(cfg) / "manifest.json")) {
    vae.emplace(vae::Vae::load(vae_dir(cfg)));
    report.reused.push_back("vae");
  } else {
    vae.emplace(train_vae_model(cfg, data));
    vae->save(vae_dir(cfg));
    report.trained.push_back("vae");
  }
  if (fs::exists(diffusion_dir(cfg) / "manifest.json")) {
    report.reused.push_back("diffusion");
  } else {
    train_diffusion_model(cfg, data, *vae).save(diffusion_dir(cfg));
    report.trained.push_back("diffusion");
  }
  for (const auto& [codec, snr] : codecs) {
    const std::string name = "jscc/" + codec + "_snr" + format_snr(snr);
    if (fs::exists(jscc_dir(cfg, codec, snr) / "manifest.json")) {
      report.reused.push_back(name);
    } else {
      train_jscc_model(cfg, data, codec, snr).save(jscc_dir(cfg, codec, snr));
      report.trained.push_back(name);
    }
  }
  return report;
}

}  // namespace semstego::pipeline
