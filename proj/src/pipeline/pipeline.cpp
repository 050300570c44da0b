#include "semstego/pipeline/pipeline.hpp"

#include <cstdio>

#include "semstego/core/array_io.hpp"
#include "semstego/core/error.hpp"
#include "semstego/core/raster.hpp"

namespace semstego::pipeline {

namespace fs = std::filesystem;
using keygen::KeyPrompt;
using keygen::Role;

namespace {

constexpr std::size_t kChunk = 32;

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const AccessError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

Tensor stack_pixels(const std::vector<const ImageTensor*>& images) {
  std::vector<Tensor> items;
  items.reserve(images.size());
  for (const ImageTensor* img : images) items.push_back(img->pixels);
  return stack(items);
}

// Diffusion-space latents (scaled posterior means) of a batch of images.
Tensor encode_scaled(const vae::Vae& vae, const std::vector<const ImageTensor*>& images) {
  return vae.latent_scale * vae.encode_batch(stack_pixels(images)).mu;
}

std::vector<ImageTensor> decode_scaled(const vae::Vae& vae, const Tensor& z) {
  const Tensor x = vae.decode_batch((1.0 / vae.latent_scale) * z);
  std::vector<ImageTensor> out;
  for (std::size_t i = 0; i < x.dim(0); ++i) out.push_back(ImageTensor::from_tensor(batch_item(x, i)));
  return out;
}

std::vector<diffusion::TextEmbedding> embed_all(const std::vector<std::optional<KeyPrompt>>& keys,
                                                const diffusion::KeyEmbedder& embedder) {
  std::vector<diffusion::TextEmbedding> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(diffusion::embed_key(k, embedder));
  return out;
}

// sample(invert(z, first), second) over a batch.
Tensor transfer(const Tensor& z, const std::vector<std::optional<KeyPrompt>>& first,
                const std::vector<std::optional<KeyPrompt>>& second, const Models& models,
                const diffusion::GuidanceConfig& g) {
  const diffusion::DiffusionModel m = models.diffusion();
  const Tensor z_T = diffusion::ddim_invert_batch(z, embed_all(first, models.embedder), m, g);
  return diffusion::ddim_sample_batch(z_T, embed_all(second, models.embedder), m, g);
}

}  // namespace

MetricRecord measure(const ImageTensor& reference, const ImageTensor& test,
                     const metrics::FeatureExtractor& phi) {
  MetricRecord r;
  r.mse = metrics::mse(reference, test);
  r.psnr_db = metrics::psnr_from_mse(r.mse);
  r.ssim = metrics::ssim(reference, test);
  r.lpips = metrics::lpips_distance(reference, test, phi);
  return r;
}

std::vector<TestItem> test_items(const RunConfig& cfg, std::size_t count) {
  std::vector<TestItem> out;
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "test_%04zu", i);
    out.push_back({id, static_cast<std::uint32_t>(i),
                   dataset_image(Split::test, i, cfg.image_size, cfg.seed)});
  }
  return out;
}

std::vector<StegoItem> hide_stage(const std::vector<TestItem>& items, const Models& models,
                                  const RunConfig& cfg, keygen::KeyRegistry& registry,
                                  keygen::Captioner& captioner, keygen::Paraphraser& paraphraser) {
  std::vector<StegoItem> out;
  in_stage("stage 1: keys", [&] {
    for (const TestItem& it : items) {
      const KeyPrompt priv = keygen::extract_private_key(it.image, captioner);
      const KeyPrompt pub = keygen::generate_public_key(priv, paraphraser);
      keygen::KeyPair pair = keygen::KeyPair::make(priv, pub);
      pair.session_id = registry.register_pair(pair);
      out.push_back({it.image_id, it.index, std::move(pair), it.image, ImageTensor{}});
    }
    return 0;
  });
  in_stage("stage 2: hide", [&] {
    const diffusion::GuidanceConfig g = guidance(cfg);
    for (std::size_t b0 = 0; b0 < out.size(); b0 += kChunk) {
      const std::size_t b1 = std::min(out.size(), b0 + kChunk);
      std::vector<const ImageTensor*> secrets;
      std::vector<std::optional<KeyPrompt>> priv, pub;
      for (std::size_t i = b0; i < b1; ++i) {
        secrets.push_back(&out[i].secret);
        priv.emplace_back(out[i].keys.private_key);
        pub.emplace_back(out[i].keys.public_key);
      }
      const Tensor z_stego = transfer(encode_scaled(models.vae, secrets), priv, pub, models, g);
      std::vector<ImageTensor> stego = decode_scaled(models.vae, z_stego);
      for (std::size_t i = b0; i < b1; ++i) out[i].stego = std::move(stego[i - b0]);
    }
    return 0;
  });
  return out;
}

std::vector<ImageTensor> channel_stage(const std::vector<StegoItem>& items,
                                       const semcom::JsccCodec& codec, double snr_db,
                                       std::uint64_t channel_seed) {
  std::vector<ImageTensor> out;
  for (std::size_t b0 = 0; b0 < items.size(); b0 += kChunk) {
    const std::size_t b1 = std::min(items.size(), b0 + kChunk);
    std::vector<const ImageTensor*> stego;
    for (std::size_t i = b0; i < b1; ++i) stego.push_back(&items[i].stego);
    const Tensor symbols = codec.encode_batch(stack_pixels(stego));
    const std::size_t k = codec.symbol_count();
    Tensor noisy(symbols.shape());
    for (std::size_t i = b0; i < b1; ++i) {
      SeededRng rng(channel_seed, make_stream_id(StreamStage::channel, items[i].index));
      const Tensor row = batch_item(symbols, i - b0);
      const Tensor y = semcom::awgn(row, snr_db, 1.0, rng);
      std::copy(y.data(), y.data() + k, noisy.data() + (i - b0) * k);
    }
    const Tensor images = codec.decode_batch(noisy);
    for (std::size_t i = 0; i < images.dim(0); ++i) {
      out.push_back(ImageTensor::from_tensor(batch_item(images, i)));
    }
  }
  return out;
}

KeyPrompt draw_decoy(const RunConfig& cfg, const KeyPrompt& true_private, std::uint32_t index) {
  SeededRng rng(cfg.seed, make_stream_id(StreamStage::decoy, index));
  return keygen::sample_decoy_key(cfg.decoy_table, true_private, rng);
}

std::vector<RoleOutcome> eval_threat(const ThreatModel& model,
                                     const std::vector<ImageTensor>& received,
                                     const std::vector<StegoItem>& items,
                                     const keygen::KeyRegistry& registry, const Models& models,
                                     const RunConfig& cfg) {
  if (received.size() != items.size()) {
    throw DimensionError("eval_threat: received images and items differ in count");
  }
  std::vector<RoleOutcome> out(items.size());
  std::vector<std::optional<KeyPrompt>> pub(items.size()), priv(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    out[i].role = model.role;
    const keygen::KeyGrant grant = registry.get(items[i].keys.session_id, model.role);
    switch (model.role) {
      case Role::legitimate:
        pub[i] = grant.public_key;
        priv[i] = grant.private_key;
        break;
      case Role::eve1:
        break;
      case Role::eve2: {
        pub[i] = grant.public_key;
        const KeyPrompt decoy =
            model.decoy ? *model.decoy
                        : draw_decoy(cfg, items[i].keys.private_key, items[i].index);
        registry.check_decoy(items[i].keys.session_id, decoy);
        priv[i] = decoy;
        out[i].decoy = decoy.text;
        break;
      }
      case Role::eve3:
        pub[i] = grant.public_key;
        break;
    }
  }

  if (model.role == Role::eve1) {
    for (std::size_t i = 0; i < items.size(); ++i) out[i].recovered = received[i];
  } else {
    const diffusion::GuidanceConfig g = guidance(cfg);
    for (std::size_t b0 = 0; b0 < items.size(); b0 += kChunk) {
      const std::size_t b1 = std::min(items.size(), b0 + kChunk);
      std::vector<const ImageTensor*> batch;
      for (std::size_t i = b0; i < b1; ++i) batch.push_back(&received[i]);
      const std::vector<std::optional<KeyPrompt>> pub_b(pub.begin() + b0, pub.begin() + b1);
      const std::vector<std::optional<KeyPrompt>> priv_b(priv.begin() + b0, priv.begin() + b1);
      const Tensor z = transfer(encode_scaled(models.vae, batch), pub_b, priv_b, models, g);
      std::vector<ImageTensor> rec = decode_scaled(models.vae, z);
      for (std::size_t i = b0; i < b1; ++i) out[i].recovered = std::move(rec[i - b0]);
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    out[i].metrics = measure(items[i].secret, out[i].recovered, models.extractor);
  }
  return out;
}

RoleOutcome eval_threat(const ThreatModel& model, const ImageTensor& received,
                        const StegoItem& item, const keygen::KeyRegistry& registry,
                        const Models& models, const RunConfig& cfg) {
  return eval_threat(model, std::vector<ImageTensor>{received}, std::vector<StegoItem>{item},
                     registry, models, cfg)[0];
}

std::vector<PipelineRecord> transmit_and_reveal(const std::vector<StegoItem>& items,
                                                const keygen::KeyRegistry& registry,
                                                const Models& models,
                                                const semcom::JsccCodec& codec,
                                                const semcom::ChannelConfig& channel,
                                                const RunConfig& cfg,
                                                const std::vector<Role>& roles) {
  const std::uint64_t channel_seed = channel.seed;
  const std::vector<ImageTensor> received = in_stage("stage 3: channel", [&] {
    return channel_stage(items, codec, channel.snr_db, channel_seed);
  });
  std::vector<PipelineRecord> records(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    PipelineRecord& r = records[i];
    r.image_id = items[i].image_id;
    r.session_id = items[i].keys.session_id;
    r.keys = items[i].keys;
    r.snr_train_db = codec.snr_train_db;
    r.snr_test_db = channel.snr_db;
    r.secret = items[i].secret;
    r.stego = items[i].stego;
    r.received = received[i];
    r.stego_metrics = measure(items[i].stego, received[i], models.extractor);
  }
  for (Role role : roles) {
    const std::vector<RoleOutcome> outcomes = in_stage("stage 4: reveal", [&] {
      return eval_threat(ThreatModel{role, std::nullopt}, received, items, registry, models, cfg);
    });
    for (std::size_t i = 0; i < items.size(); ++i) records[i].outcomes.push_back(outcomes[i]);
  }
  return records;
}

std::vector<PipelineRecord> run_pipeline(const std::vector<TestItem>& items, const Models& models,
                                         const semcom::JsccCodec& codec,
                                         const semcom::ChannelConfig& channel,
                                         const RunConfig& cfg, const std::vector<Role>& roles) {
  keygen::KeyRegistry registry;
  auto captioner = keygen::make_captioner(cfg);
  auto paraphraser = keygen::make_paraphraser(cfg);
  const std::vector<StegoItem> hidden =
      hide_stage(items, models, cfg, registry, *captioner, *paraphraser);
  return transmit_and_reveal(hidden, registry, models, codec, channel, cfg, roles);
}

std::vector<fs::path> dump_record(const PipelineRecord& record, const fs::path& dir) {
  const fs::path base = dir / record.image_id;
  fs::create_directories(base);
  std::vector<fs::path> written;
  auto dump = [&](const std::string& name, const ImageTensor& img) {
    save_array(base / (name + ".arr"), img.pixels);
    write_png(base / (name + ".png"), img);
    written.push_back(base / (name + ".arr"));
    written.push_back(base / (name + ".png"));
  };
  dump("secret", record.secret);
  dump("stego", record.stego);
  dump("received", record.received);
  for (const RoleOutcome& o : record.outcomes) dump("recovered_" + keygen::role_name(o.role), o.recovered);
  return written;
}

}  // namespace semstego::pipeline
