#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semstego/core/config.hpp"
#include "semstego/core/tensor.hpp"
#include "semstego/nn/layers.hpp"
#include "semstego/semcom/channel.hpp"

namespace semstego::semcom {

struct JsccArchitecture {
  std::string name = "small";
  std::size_t width = 32;
  std::size_t depth = 1;
  std::size_t image_channels = 3;
  std::size_t image_size = 32;
  // Real channel symbols per real source value.
  std::size_t ratio_num = 1;
  std::size_t ratio_den = 12;

  // k = ratio * C * H * W; throws RangeError unless it is an integer that
  // tiles the 4x-downsampled feature grid.
  std::size_t symbol_count() const;
  std::size_t symbol_channels() const;
};

void to_json(nlohmann::json& j, const JsccArchitecture& a);
void from_json(const nlohmann::json& j, JsccArchitecture& a);

JsccArchitecture make_jscc_architecture(const JsccCodecSettings& codec, const JsccSettings& jscc,
                                        std::size_t image_channels, std::size_t image_size);

// Convolutional autoencoder E_sem / D_sem with unit-power symbol normalization.
class JsccCodec {
 public:
  JsccCodec(const JsccArchitecture& arch, SeededRng init_rng);
  static JsccCodec load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  const JsccArchitecture& architecture() const { return arch_; }
  std::size_t symbol_count() const { return arch_.symbol_count(); }

  // images (B, C, H, W) -> unit-power symbols (B, k).
  nn::Var encode_graph(const nn::Var& images) const;
  // symbols (B, k) -> images (B, C, H, W) in (0, 1).
  nn::Var decode_graph(const nn::Var& symbols) const;

  Tensor encode_batch(const Tensor& images) const;
  Tensor decode_batch(const Tensor& symbols) const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  double snr_train_db = 0.0;
  nlohmann::json manifest = nlohmann::json::object();

 private:
  struct ResBlock {
    nn::Conv2d a, b;
    nn::Var operator()(const nn::Var& x) const;
  };

  JsccCodec(const JsccArchitecture& arch, nn::ParamStore store);
  void build();

  JsccArchitecture arch_;
  nn::ParamStore store_;
  nn::Conv2d enc_in_, enc_down1_, enc_down2_, enc_out_;
  nn::Conv2d dec_in_, dec_out_;
  nn::ConvTranspose2d dec_up1_, dec_up2_;
  std::vector<ResBlock> enc_hi_, enc_lo_, dec_lo_, dec_hi_;
};

SymbolVector sem_encode(const ImageTensor& image, const JsccCodec& codec);
ImageTensor sem_decode(const SymbolVector& symbols, const JsccCodec& codec);

struct JsccTrainOptions {
  JsccSettings settings;
  std::uint64_t seed = 0;
  std::string dataset_id = "synthetic";
};

// End-to-end MSE through an AWGN channel at snr_train_db.
JsccCodec train_jscc(const std::vector<ImageTensor>& train,
                     const std::vector<ImageTensor>& validation, const JsccArchitecture& arch,
                     double snr_train_db, const JsccTrainOptions& options);

// Mean PSNR (dB) of decode(channel(encode(x))) over `images`, using the
// channel stream (seed, stream_id).
double evaluate_jscc_psnr(const JsccCodec& codec, const std::vector<ImageTensor>& images,
                          double snr_db, std::uint64_t seed, std::uint64_t stream_id);

}  // namespace semstego::semcom
