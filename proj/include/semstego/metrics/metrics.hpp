#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semstego/core/tensor.hpp"

namespace semstego::metrics {

inline constexpr double kPsnrCapDb = 100.0;

double mse(const ImageTensor& x, const ImageTensor& y);
double mse(const Tensor& x, const Tensor& y);
// 10 log10(max_i^2 / mse), or kPsnrCapDb when mse < 1e-10.
double psnr_from_mse(double mse, double max_i = 1.0);
double psnr(const ImageTensor& x, const ImageTensor& y, double max_i = 1.0);

struct SsimConfig {
  int window = 11;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

// Mean SSIM over every fully contained window position and channel, with
// uniform weights and population (1/N) moments.
double ssim(const ImageTensor& x, const ImageTensor& y, const SsimConfig& cfg = {});

struct LpipsConfig {
  std::string backend = "random_conv";  // random_conv | external
  std::uint64_t seed = 0x1f1b5;
  std::vector<std::size_t> widths{16, 32, 64};
  // One weight per layer; empty means 1 for every layer.
  std::vector<double> layer_weights;
  std::filesystem::path external_dir;
};

// A stack of 3x3 conv + ReLU layers; layer l > 0 halves the resolution.
class FeatureExtractor {
 public:
  struct Layer {
    Tensor weight;  // (out, in, 3, 3)
    Tensor bias;    // (out)
    int stride = 1;
  };

  FeatureExtractor(std::vector<Layer> layers, std::vector<double> layer_weights);
  static FeatureExtractor random(const LpipsConfig& cfg, std::size_t in_channels = 3);
  // layer<l>.weight.arr / layer<l>.bias.arr plus manifest.json {strides, layer_weights}.
  static FeatureExtractor load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  // Activations of every layer for images (B, C, H, W).
  std::vector<Tensor> features(const Tensor& images) const;
  const std::vector<double>& layer_weights() const { return layer_weights_; }
  std::size_t layer_count() const { return layers_.size(); }

 private:
  std::vector<Layer> layers_;
  std::vector<double> layer_weights_;
};

// Throws NotFoundError when the external backend directory is unusable.
FeatureExtractor make_feature_extractor(const LpipsConfig& cfg, std::size_t in_channels = 3);

// sum_l w_l * mean_{h,w} || f_l(x) - f_l(y) ||^2 over unit-normalized
// per-position channel vectors.
double lpips_distance(const ImageTensor& x, const ImageTensor& y, const FeatureExtractor& phi);
// Pairwise distances for stacked batches (B, C, H, W).
std::vector<double> lpips_distance_batch(const Tensor& x, const Tensor& y,
                                         const FeatureExtractor& phi);

}  // namespace semstego::metrics
