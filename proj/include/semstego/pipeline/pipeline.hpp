#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semstego/keygen/keygen.hpp"
#include "semstego/pipeline/models.hpp"
#include "semstego/semcom/channel.hpp"

namespace semstego::pipeline {

struct MetricRecord {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double lpips = 0.0;
};

MetricRecord measure(const ImageTensor& reference, const ImageTensor& test,
                     const metrics::FeatureExtractor& phi);

struct TestItem {
  std::string image_id;
  std::uint32_t index = 0;  // selects the per-image channel and decoy streams
  ImageTensor image;
};

// Test split items 0..count-1 with ids "test_0000", ...
std::vector<TestItem> test_items(const RunConfig& cfg, std::size_t count);

// Output of stages 1 and 2 for one secret image.
struct StegoItem {
  std::string image_id;
  std::uint32_t index = 0;
  keygen::KeyPair keys;
  ImageTensor secret;
  ImageTensor stego;
};

// Stages 1 (key extraction and registration) and 2 (hide), batched.
std::vector<StegoItem> hide_stage(const std::vector<TestItem>& items, const Models& models,
                                  const RunConfig& cfg, keygen::KeyRegistry& registry,
                                  keygen::Captioner& captioner, keygen::Paraphraser& paraphraser);

// Stage 3: sem_encode -> AWGN -> sem_decode. Item i uses the channel stream
// (channel_seed, channel/index_i) at every SNR.
std::vector<ImageTensor> channel_stage(const std::vector<StegoItem>& items,
                                       const semcom::JsccCodec& codec, double snr_db,
                                       std::uint64_t channel_seed);

struct ThreatModel {
  keygen::Role role = keygen::Role::legitimate;
  // eve2's wrong private key; drawn from the decoy table when absent.
  std::optional<keygen::KeyPrompt> decoy;
};

struct RoleOutcome {
  keygen::Role role = keygen::Role::legitimate;
  ImageTensor recovered;
  MetricRecord metrics;  // against the true secret image
  std::optional<std::string> decoy;
};

// Stage 4 as seen by `model.role`: legitimate reveals with (k_pub, k_priv),
// eve1 keeps the received stego image, eve2 reveals with (k_pub, decoy),
// eve3 reveals with (k_pub, null key). Keys come from the registry; asking
// for a key outside the role's grant raises AccessError.
std::vector<RoleOutcome> eval_threat(const ThreatModel& model,
                                     const std::vector<ImageTensor>& received,
                                     const std::vector<StegoItem>& items,
                                     const keygen::KeyRegistry& registry, const Models& models,
                                     const RunConfig& cfg);
RoleOutcome eval_threat(const ThreatModel& model, const ImageTensor& received,
                        const StegoItem& item, const keygen::KeyRegistry& registry,
                        const Models& models, const RunConfig& cfg);

// The decoy eve2 uses for item `index` (stream (seed, decoy/index)).
keygen::KeyPrompt draw_decoy(const RunConfig& cfg, const keygen::KeyPrompt& true_private,
                             std::uint32_t index);

struct PipelineRecord {
  std::string image_id;
  std::string session_id;
  keygen::KeyPair keys;
  double snr_train_db = 0.0;
  double snr_test_db = 0.0;
  ImageTensor secret;
  ImageTensor stego;
  ImageTensor received;
  MetricRecord stego_metrics;  // x_stego against the channel output
  std::vector<RoleOutcome> outcomes;
};

// Algorithm 1 end to end for a batch of images at one channel setting.
// Failures surface as StageError naming the stage; key-policy violations
// remain AccessError.
std::vector<PipelineRecord> run_pipeline(const std::vector<TestItem>& items, const Models& models,
                                         const semcom::JsccCodec& codec,
                                         const semcom::ChannelConfig& channel,
                                         const RunConfig& cfg,
                                         const std::vector<keygen::Role>& roles = {
                                             std::begin(keygen::kAllRoles),
                                             std::end(keygen::kAllRoles)});

// Stages 3 and 4 for already hidden items.
std::vector<PipelineRecord> transmit_and_reveal(const std::vector<StegoItem>& items,
                                                const keygen::KeyRegistry& registry,
                                                const Models& models,
                                                const semcom::JsccCodec& codec,
                                                const semcom::ChannelConfig& channel,
                                                const RunConfig& cfg,
                                                const std::vector<keygen::Role>& roles);

// <dir>/<image_id>/{secret,stego,received,recovered_<role>}.{arr,png}
std::vector<std::filesystem::path> dump_record(const PipelineRecord& record,
                                               const std::filesystem::path& dir);

}  // namespace semstego::pipeline
