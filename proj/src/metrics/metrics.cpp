#include "semstego/metrics/metrics.hpp"

#include <cmath>

#include "json.hpp"
#include "semstego/core/array_io.hpp"
#include "semstego/core/config.hpp"
#include "semstego/core/error.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/nn/autograd.hpp"

namespace semstego::metrics {

double mse(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "mse");
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

double mse(const ImageTensor& x, const ImageTensor& y) { return mse(x.pixels, y.pixels); }

double psnr_from_mse(double m, double max_i) {
  if (m < 1e-10) return kPsnrCapDb;
  return 10.0 * std::log10(max_i * max_i / m);
}

double psnr(const ImageTensor& x, const ImageTensor& y, double max_i) {
  return psnr_from_mse(mse(x, y), max_i);
}

void SsimConfig::validate() const {
  if (window < 3 || window % 2 == 0) throw RangeError("SSIM window must be odd and >= 3");
  if (!(dynamic_range > 0.0) || k1 < 0.0 || k2 < 0.0) throw RangeError("invalid SSIM constants");
}

double ssim(const ImageTensor& x, const ImageTensor& y, const SsimConfig& cfg) {
  cfg.validate();
  require_same_shape(x.pixels, y.pixels, "ssim");
  const std::size_t c = x.pixels.dim(0), h = x.pixels.dim(1), w = x.pixels.dim(2);
  const std::size_t win = static_cast<std::size_t>(cfg.window);
  if (h < win || w < win) {
    throw DimensionError("image " + shape_to_string(x.pixels.shape()) +
                         " is smaller than the SSIM window " + std::to_string(win));
  }
  const double c1 = cfg.c1(), c2 = cfg.c2();
  const double n = static_cast<double>(win * win);
  const std::size_t ph = h - win + 1, pw = w - win + 1;

  // Summed-area tables of x, y, x^2, y^2, xy per channel.
  const std::size_t sh = h + 1, sw = w + 1;
  std::vector<double> sx(sh * sw), sy(sh * sw), sxx(sh * sw), syy(sh * sw), sxy(sh * sw);
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* px = x.pixels.data() + ch * h * w;
    const double* py = y.pixels.data() + ch * h * w;
    for (std::size_t i = 0; i < sh; ++i) {
      for (std::size_t j = 0; j < sw; ++j) {
        const std::size_t k = i * sw + j;
        if (i == 0 || j == 0) {
          sx[k] = sy[k] = sxx[k] = syy[k] = sxy[k] = 0.0;
          continue;
        }
        const double a = px[(i - 1) * w + (j - 1)], b = py[(i - 1) * w + (j - 1)];
        const std::size_t up = k - sw, left = k - 1, diag = k - sw - 1;
        sx[k] = a + sx[up] + sx[left] - sx[diag];
        sy[k] = b + sy[up] + sy[left] - sy[diag];
        sxx[k] = a * a + sxx[up] + sxx[left] - sxx[diag];
        syy[k] = b * b + syy[up] + syy[left] - syy[diag];
        sxy[k] = a * b + sxy[up] + sxy[left] - sxy[diag];
      }
    }
    auto box = [&](const std::vector<double>& s, std::size_t i, std::size_t j) {
      return s[(i + win) * sw + (j + win)] - s[i * sw + (j + win)] - s[(i + win) * sw + j] +
             s[i * sw + j];
    };
    for (std::size_t i = 0; i < ph; ++i) {
      for (std::size_t j = 0; j < pw; ++j) {
        const double mx = box(sx, i, j) / n, my = box(sy, i, j) / n;
        const double vx = std::max(0.0, box(sxx, i, j) / n - mx * mx);
        const double vy = std::max(0.0, box(syy, i, j) / n - my * my);
        const double cov = box(sxy, i, j) / n - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
  }
  return total / static_cast<double>(c * ph * pw);
}

FeatureExtractor::FeatureExtractor(std::vector<Layer> layers, std::vector<double> layer_weights)
    : layers_(std::move(layers)), layer_weights_(std::move(layer_weights)) {
  if (layers_.empty()) throw RangeError("feature extractor needs at least one layer");
  if (layer_weights_.empty()) layer_weights_.assign(layers_.size(), 1.0);
  if (layer_weights_.size() != layers_.size()) {
    throw DimensionError("expected " + std::to_string(layers_.size()) + " LPIPS layer weights, got " +
                         std::to_string(layer_weights_.size()));
  }
  for (double wl : layer_weights_) {
    if (!(wl >= 0.0)) throw RangeError("LPIPS layer weights must be non-negative");
  }
  for (const Layer& l : layers_) {
    if (l.weight.rank() != 4 || l.bias.rank() != 1 || l.bias.dim(0) != l.weight.dim(0)) {
      throw DimensionError("malformed feature extractor layer");
    }
  }
}

FeatureExtractor FeatureExtractor::random(const LpipsConfig& cfg, std::size_t in_channels) {
  SeededRng rng(cfg.seed, make_stream_id(StreamStage::lpips_extractor, 0));
  std::vector<Layer> layers;
  std::size_t cin = in_channels;
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    Layer layer;
    const std::size_t cout = cfg.widths[l];
    layer.weight = std::sqrt(2.0 / static_cast<double>(cin * 9)) *
                   gaussian_sample(rng, {cout, cin, 3, 3});
    layer.bias = Tensor({cout}, 0.0);
    layer.stride = l == 0 ? 1 : 2;
    layers.push_back(std::move(layer));
    cin = cout;
  }
  return FeatureExtractor(std::move(layers), cfg.layer_weights);
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw NotFoundError("feature extractor directory not found: " + dir.string());
  }
  const nlohmann::json doc = read_json_file(dir / "manifest.json");
  const auto strides = doc.at("strides").get<std::vector<int>>();
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < strides.size(); ++l) {
    const std::string p = "layer" + std::to_string(l);
    layers.push_back({load_array(dir / (p + ".weight.arr")), load_array(dir / (p + ".bias.arr")),
                      strides[l]});
  }
  return FeatureExtractor(std::move(layers), doc.value("layer_weights", std::vector<double>{}));
}

void FeatureExtractor::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<int> strides;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l);
    save_array(dir / (p + ".weight.arr"), layers_[l].weight);
    save_array(dir / (p + ".bias.arr"), layers_[l].bias);
    strides.push_back(layers_[l].stride);
  }
  write_json_file(dir / "manifest.json", {{"strides", strides}, {"layer_weights", layer_weights_}});
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& images) const {
  nn::NoGradGuard guard;
  std::vector<Tensor> out;
  nn::Var h(images);
  for (const Layer& l : layers_) {
    h = nn::relu(nn::conv2d(h, nn::Var(l.weight), nn::Var(l.bias), l.stride, 1));
    out.push_back(h.value());
  }
  return out;
}

FeatureExtractor make_feature_extractor(const LpipsConfig& cfg, std::size_t in_channels) {
  if (cfg.backend == "random_conv") return FeatureExtractor::random(cfg, in_channels);
  if (cfg.backend == "external") {
    if (cfg.external_dir.empty()) throw NotFoundError("external LPIPS backend needs a directory");
    return FeatureExtractor::load(cfg.external_dir);
  }
  throw RangeError("unknown LPIPS backend: " + cfg.backend);
}

namespace {

// Unit-normalizes every channel vector of a (B, C, H, W) activation in place.
void normalize_positions(Tensor& f) {
  const std::size_t b = f.dim(0), c = f.dim(1), p = f.dim(2) * f.dim(3);
  for (std::size_t n = 0; n < b; ++n) {
    double* base = f.data() + n * c * p;
    for (std::size_t i = 0; i < p; ++i) {
      double sq = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) sq += base[ch * p + i] * base[ch * p + i];
      const double inv = 1.0 / (std::sqrt(sq) + 1e-10);
      for (std::size_t ch = 0; ch < c; ++ch) base[ch * p + i] *= inv;
    }
  }
}

}  // namespace

std::vector<double> lpips_distance_batch(const Tensor& x, const Tensor& y,
                                         const FeatureExtractor& phi) {
  require_same_shape(x, y, "lpips_distance");
  if (x.rank() != 4) throw DimensionError("lpips_distance_batch expects (B, C, H, W)");
  std::vector<Tensor> fx = phi.features(x), fy = phi.features(y);
  std::vector<double> dist(x.dim(0), 0.0);
  for (std::size_t l = 0; l < fx.size(); ++l) {
    normalize_positions(fx[l]);
    normalize_positions(fy[l]);
    const std::size_t c = fx[l].dim(1), p = fx[l].dim(2) * fx[l].dim(3);
    for (std::size_t n = 0; n < dist.size(); ++n) {
      double acc = 0.0;
      const std::size_t off = n * c * p;
      for (std::size_t i = 0; i < c * p; ++i) {
        const double d = fx[l][off + i] - fy[l][off + i];
        acc += d * d;
      }
      dist[n] += phi.layer_weights()[l] * acc / static_cast<double>(p);
    }
  }
  return dist;
}

double lpips_distance(const ImageTensor& x, const ImageTensor& y, const FeatureExtractor& phi) {
  require_same_shape(x.pixels, y.pixels, "lpips_distance");
  Shape s = x.pixels.shape();
  s.insert(s.begin(), 1);
  return lpips_distance_batch(x.pixels.reshaped(s), y.pixels.reshaped(s), phi)[0];
}

}  // namespace semstego::metrics
