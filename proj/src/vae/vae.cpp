#include "semstego/vae/vae.hpp"

#include <bit>
#include <cmath>
#include <numeric>

#include "semstego/core/error.hpp"

namespace semstego::vae {

using nn::Var;

void to_json(nlohmann::json& j, const VaeArchitecture& a) {
  j = nlohmann::json{{"image_channels", a.image_channels},
                     {"latent_channels", a.latent_channels},
                     {"downsample_factor", a.downsample_factor},
                     {"base_width", a.base_width}};
}

void from_json(const nlohmann::json& j, VaeArchitecture& a) {
  a.image_channels = j.at("image_channels").get<std::size_t>();
  a.latent_channels = j.at("latent_channels").get<std::size_t>();
  a.downsample_factor = j.at("downsample_factor").get<std::size_t>();
  a.base_width = j.at("base_width").get<std::size_t>();
}

namespace {

std::size_t stage_width(const VaeArchitecture& a, std::size_t stage) {
  return a.base_width * (2 + stage) / 2;
}

std::size_t stage_count(const VaeArchitecture& a) {
  if (a.downsample_factor < 2 || !std::has_single_bit(a.downsample_factor)) {
    throw RangeError("downsample factor must be a power of two >= 2");
  }
  return static_cast<std::size_t>(std::countr_zero(a.downsample_factor));
}

}  // namespace

Vae::Vae(const VaeArchitecture& arch, SeededRng init_rng)
    : arch_(arch), store_(std::move(init_rng)) {
  build();
  store_.seal();
  manifest = {{"architecture", arch_}, {"trained", false}};
}

Vae::Vae(const VaeArchitecture& arch, nn::ParamStore store)
    : arch_(arch), store_(std::move(store)) {
  build();
}

void Vae::build() {
  const std::size_t stages = stage_count(arch_);
  const std::size_t c = arch_.image_channels;
  enc_in_ = nn::Conv2d(store_, "enc.in", c, stage_width(arch_, 0), 3);
  for (std::size_t s = 0; s < stages; ++s) {
    const std::string p = "enc.stage" + std::to_string(s);
    enc_down_.emplace_back(store_, p + ".down", stage_width(arch_, s), stage_width(arch_, s + 1), 4,
                           2, 1);
    enc_convs_.emplace_back(store_, p + ".conv", stage_width(arch_, s + 1),
                            stage_width(arch_, s + 1), 3);
  }
  const std::size_t top = stage_width(arch_, stages);
  enc_out_ = nn::Conv2d(store_, "enc.out", top, 2 * arch_.latent_channels, 3);

  dec_in_ = nn::Conv2d(store_, "dec.in", arch_.latent_channels, top, 3);
  dec_mid_ = nn::Conv2d(store_, "dec.mid", top, top, 3);
  for (std::size_t s = stages; s-- > 0;) {
    const std::string p = "dec.stage" + std::to_string(s);
    dec_up_.emplace_back(store_, p + ".up", stage_width(arch_, s + 1), stage_width(arch_, s), 4, 2,
                         1);
    if (s > 0) {
      dec_convs_.emplace_back(store_, p + ".conv", stage_width(arch_, s), stage_width(arch_, s), 3);
    }
  }
  dec_out_ = nn::Conv2d(store_, "dec.out", stage_width(arch_, 0), c, 3);
}

Shape Vae::latent_shape(std::size_t height, std::size_t width) const {
  return {arch_.latent_channels, height / arch_.downsample_factor, width / arch_.downsample_factor};
}

void Vae::check_image_shape(const Shape& shape) const {
  if (shape.size() != 4 || shape[1] != arch_.image_channels) {
    throw DimensionError("VAE expects images (B, " + std::to_string(arch_.image_channels) +
                         ", H, W), got " + shape_to_string(shape));
  }
  if (shape[2] % arch_.downsample_factor != 0 || shape[3] % arch_.downsample_factor != 0) {
    throw DimensionError("image size " + shape_to_string(shape) +
                         " not divisible by the downsample factor " +
                         std::to_string(arch_.downsample_factor));
  }
}

Vae::Encoded Vae::encode_graph(const Var& x) const {
  check_image_shape(x.shape());
  Var h = nn::silu(enc_in_(x));
  for (std::size_t s = 0; s < enc_down_.size(); ++s) {
    h = nn::silu(enc_down_[s](h));
    h = nn::silu(enc_convs_[s](h));
  }
  Var out = enc_out_(h);
  const std::size_t lc = arch_.latent_channels;
  return {nn::slice_channels(out, 0, lc),
          nn::clamp(nn::slice_channels(out, lc, 2 * lc), kLogVarMin, kLogVarMax)};
}

Var Vae::decode_graph(const Var& z) const {
  if (z.shape().size() != 4 || z.shape()[1] != arch_.latent_channels) {
    throw DimensionError("VAE decoder expects latents (B, " +
                         std::to_string(arch_.latent_channels) + ", H', W'), got " +
                         shape_to_string(z.shape()));
  }
  Var h = nn::silu(dec_in_(z));
  h = nn::silu(dec_mid_(h));
  for (std::size_t i = 0; i < dec_up_.size(); ++i) {
    h = nn::silu(dec_up_[i](h));
    if (i < dec_convs_.size()) h = nn::silu(dec_convs_[i](h));
  }
  return nn::sigmoid(dec_out_(h));
}

LatentDistribution Vae::encode_batch(const Tensor& images) const {
  nn::NoGradGuard guard;
  Encoded e = encode_graph(Var(images));
  return {e.mu.value(), e.log_var.value()};
}

LatentDistribution Vae::encode(const ImageTensor& x) const {
  Shape s = x.pixels.shape();
  s.insert(s.begin(), 1);
  LatentDistribution batch = encode_batch(x.pixels.reshaped(s));
  return {batch_item(batch.mu, 0), batch_item(batch.log_var, 0)};
}

Tensor Vae::decode_batch(const Tensor& latents) const {
  nn::NoGradGuard guard;
  return clamp(decode_graph(Var(latents)).value(), 0.0, 1.0);
}

ImageTensor Vae::decode(const LatentTensor& z) const {
  Shape s = z.values.shape();
  if (s.size() != 3) throw DimensionError("latent must have shape (C', H', W')");
  s.insert(s.begin(), 1);
  return ImageTensor::from_tensor(batch_item(decode_batch(z.values.reshaped(s)), 0));
}

void Vae::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  store_.save(dir / "params");
  nlohmann::json doc = manifest;
  doc["architecture"] = arch_;
  doc["latent_scale"] = latent_scale;
  doc["parameter_count"] = store_.parameter_count();
  write_json_file(dir / "manifest.json", doc);
}

Vae Vae::load(const std::filesystem::path& dir) {
  const nlohmann::json doc = read_json_file(dir / "manifest.json");
  Vae vae(doc.at("architecture").get<VaeArchitecture>(), nn::ParamStore::load(dir / "params"));
  vae.latent_scale = doc.value("latent_scale", 1.0);
  vae.manifest = doc;
  return vae;
}

LatentTensor reparameterize(const LatentDistribution& dist, const Tensor& eps) {
  require_same_shape(dist.mu, dist.log_var, "reparameterize");
  require_same_shape(dist.mu, eps, "reparameterize");
  Tensor z = dist.mu;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] += std::exp(0.5 * dist.log_var[i]) * eps[i];
  }
  return LatentTensor{std::move(z)};
}

double kl_divergence(const LatentDistribution& dist) {
  require_same_shape(dist.mu, dist.log_var, "kl_divergence");
  if (dist.mu.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.mu.size(); ++i) {
    const double lv = dist.log_var[i];
    acc += dist.mu[i] * dist.mu[i] + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * acc / static_cast<double>(dist.mu.size());
}

VaeLoss vae_loss(const Tensor& x, const Tensor& x_hat, const LatentDistribution& dist,
                 double kl_weight) {
  require_same_shape(x, x_hat, "vae_loss");
  VaeLoss loss;
  const Tensor diff = x - x_hat;
  loss.reconstruction = x.empty() ? 0.0 : dot(diff, diff) / static_cast<double>(x.size());
  loss.kl = kl_divergence(dist);
  loss.total = loss.reconstruction + kl_weight * loss.kl;
  return loss;
}

namespace {

Var kl_graph(const Var& mu, const Var& log_var) {
  // 0.5 * mean(mu^2 + exp(lv) - 1 - lv)
  Var terms = nn::sub(nn::add(nn::mul(mu, mu), nn::exp(log_var)), nn::add_scalar(log_var, 1.0));
  return nn::scale(nn::mean(terms), 0.5);
}

}  // namespace

Var vae_loss_graph(const Vae& vae, const Tensor& images, const Tensor& eps, double kl_weight) {
  Vae::Encoded e = vae.encode_graph(Var(images));
  require_same_shape(e.mu.value(), eps, "vae_loss_graph");
  Var z = nn::add(e.mu, nn::mul(nn::exp(nn::scale(e.log_var, 0.5)), Var(eps)));
  Var recon = nn::mse_loss(vae.decode_graph(z), images);
  return nn::add(recon, nn::scale(kl_graph(e.mu, e.log_var), kl_weight));
}

Tensor stack_images(const std::vector<ImageTensor>& images) {
  std::vector<Tensor> items;
  items.reserve(images.size());
  for (const ImageTensor& img : images) items.push_back(img.pixels);
  return stack(items);
}

namespace {

Tensor gather_batch(const std::vector<ImageTensor>& images, const std::vector<std::size_t>& order,
                    std::size_t begin, std::size_t end) {
  std::vector<Tensor> items;
  for (std::size_t i = begin; i < end; ++i) items.push_back(images[order[i]].pixels);
  return stack(items);
}

struct EvalResult {
  double reconstruction = 0.0;
  double kl = 0.0;
};

EvalResult evaluate(const Vae& vae, const std::vector<ImageTensor>& images, double /*kl_weight*/) {
  EvalResult r;
  if (images.empty()) return r;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t chunk = 64;
  double recon_sum = 0.0, kl_sum = 0.0;
  std::size_t pixel_count = 0, latent_count = 0;
  for (std::size_t b = 0; b < images.size(); b += chunk) {
    const Tensor x = gather_batch(images, order, b, std::min(images.size(), b + chunk));
    const LatentDistribution d = vae.encode_batch(x);
    const Tensor x_hat = vae.decode_batch(d.mu);
    const Tensor diff = x - x_hat;
    recon_sum += dot(diff, diff);
    pixel_count += x.size();
    kl_sum += kl_divergence(d) * static_cast<double>(d.mu.size());
    latent_count += d.mu.size();
  }
  r.reconstruction = recon_sum / static_cast<double>(pixel_count);
  r.kl = kl_sum / static_cast<double>(latent_count);
  return r;
}

void shuffle(std::vector<std::size_t>& order, SeededRng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
}

}  // namespace

double reconstruction_mse(const Vae& vae, const std::vector<ImageTensor>& images) {
  return evaluate(vae, images, 0.0).reconstruction;
}

Vae train_vae(const std::vector<ImageTensor>& train, const std::vector<ImageTensor>& validation,
              const VaeArchitecture& arch, const VaeTrainOptions& options) {
  if (train.empty()) throw RangeError("train_vae: empty dataset");
  const VaeSettings& s = options.settings;
  Vae vae(arch, SeededRng(options.seed, make_stream_id(StreamStage::vae_init, 0)));
  SeededRng order_rng(options.seed, make_stream_id(StreamStage::vae_train, 0));
  SeededRng noise_rng(options.seed, make_stream_id(StreamStage::vae_train, 1));
  nn::Adam opt(vae.params(), nn::AdamConfig{.learning_rate = s.learning_rate});

  nlohmann::json history = nlohmann::json::array();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, s.batch_size);
  const std::vector<ImageTensor>& val = validation.empty() ? train : validation;

  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    // Cosine decay to 10% of the base rate.
    const double progress = s.epochs > 1 ? static_cast<double>(epoch) / (s.epochs - 1) : 0.0;
    opt.set_learning_rate(s.learning_rate * (0.55 + 0.45 * std::cos(M_PI * progress)));
    shuffle(order, order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const Tensor x = gather_batch(train, order, b, std::min(order.size(), b + batch));
      const Shape lshape = {x.dim(0), arch.latent_channels, x.dim(2) / arch.downsample_factor,
                            x.dim(3) / arch.downsample_factor};
      const Tensor eps = gaussian_sample(noise_rng, lshape);
      Var loss = vae_loss_graph(vae, x, eps, s.kl_weight);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingDivergedError("VAE loss became non-finite at epoch " +
                                    std::to_string(epoch + 1));
      }
      loss.backward();
      opt.step();
      loss_sum += value;
      ++batches;
    }
    const EvalResult ev = evaluate(vae, val, s.kl_weight);
    history.push_back({{"epoch", epoch + 1},
                       {"train_loss", loss_sum / static_cast<double>(batches)},
                       {"val_reconstruction_mse", ev.reconstruction},
                       {"val_kl", ev.kl},
                       {"val_loss", ev.reconstruction + s.kl_weight * ev.kl}});
  }

  // Scale so that the posterior means have unit standard deviation.
  {
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < train.size(); b += 64) {
      const LatentDistribution d =
          vae.encode_batch(gather_batch(train, all, b, std::min(train.size(), b + 64)));
      for (double v : d.mu.values()) {
        sum += v;
        sum_sq += v * v;
      }
      n += d.mu.size();
    }
    const double m = sum / static_cast<double>(n);
    const double var = sum_sq / static_cast<double>(n) - m * m;
    vae.latent_scale = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }

  const EvalResult final_eval = evaluate(vae, val, s.kl_weight);
  vae.manifest = {{"architecture", arch},
                  {"trained", s.epochs > 0},
                  {"dataset_id", options.dataset_id},
                  {"seed", options.seed},
                  {"epochs", s.epochs},
                  {"batch_size", s.batch_size},
                  {"learning_rate", s.learning_rate},
                  {"kl_weight", s.kl_weight},
                  {"train_size", train.size()},
                  {"validation_size", val.size()},
                  {"history", history},
                  {"final_val_reconstruction_mse", final_eval.reconstruction},
                  {"final_val_kl", final_eval.kl}};
  return vae;
}

}  // namespace semstego::vae
