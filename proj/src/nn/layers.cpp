#include "semstego/nn/layers.hpp"

#include <cmath>

#include "semstego/core/array_io.hpp"
#include "semstego/core/error.hpp"

namespace semstego::nn {

Var ParamStore::declare(const std::string& name, const Shape& shape, std::size_t fan_in) {
  if (auto it = params_.find(name); it != params_.end()) {
    if (it->second.shape() != shape) {
      throw DimensionError("parameter '" + name + "' has shape " +
                           shape_to_string(it->second.shape()) + ", declared " +
                           shape_to_string(shape));
    }
    return it->second;
  }
  if (!init_rng_) throw NotFoundError("missing parameter '" + name + "'");
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor init(shape);
  for (double& v : init.values()) v = (2.0 * init_rng_->uniform() - 1.0) * bound;
  Var param(std::move(init), true);
  params_.emplace(name, param);
  return param;
}

Var ParamStore::declare_zeros(const std::string& name, const Shape& shape) {
  if (params_.count(name) || !init_rng_) return declare(name, shape, 1);
  Var param(Tensor(shape, 0.0), true);
  params_.emplace(name, param);
  return param;
}

const Var& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw NotFoundError("missing parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

void ParamStore::fill(double value) {
  for (auto& [_, p] : params_) p.mutable_value().fill(value);
}

void ParamStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, p] : params_) save_array(dir / (name + ".arr"), p.value());
}

ParamStore ParamStore::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("no weight directory " + dir.string());
  ParamStore store;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".arr") continue;
    store.params_.emplace(entry.path().stem().string(), Var(load_array(entry.path()), true));
  }
  return store;
}

ParamStore ParamStore::clone() const {
  ParamStore copy;
  for (const auto& [name, p] : params_) copy.params_.emplace(name, Var(p.value(), true));
  return copy;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, std::size_t in_channels,
               std::size_t out_channels, std::size_t kernel, int stride_, int pad_)
    : stride(stride_), pad(pad_ < 0 ? static_cast<int>(kernel / 2) : pad_) {
  const std::size_t fan_in = in_channels * kernel * kernel;
  weight = store.declare(name + ".weight", {out_channels, in_channels, kernel, kernel}, fan_in);
  bias = store.declare(name + ".bias", {out_channels}, fan_in);
}

ConvTranspose2d::ConvTranspose2d(ParamStore& store, const std::string& name,
                                 std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel, int stride_, int pad_)
    : stride(stride_), pad(pad_) {
  // Each output pixel receives about in*k*k/stride^2 contributions.
  const std::size_t fan_in =
      std::max<std::size_t>(1, in_channels * kernel * kernel / (stride_ * stride_));
  weight = store.declare(name + ".weight", {in_channels, out_channels, kernel, kernel}, fan_in);
  bias = store.declare(name + ".bias", {out_channels}, fan_in);
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in_features,
               std::size_t out_features, bool with_bias) {
  weight = store.declare(name + ".weight", {in_features, out_features}, in_features);
  if (with_bias) bias = store.declare(name + ".bias", {out_features}, in_features);
}

Adam::Adam(const ParamStore& store, AdamConfig config) : config_(config) {
  for (const auto& [_, p] : store.entries()) {
    slots_.push_back({p, Tensor(p.shape(), 0.0), Tensor(p.shape(), 0.0)});
  }
}

double Adam::step() {
  double norm_sq = 0.0;
  std::vector<Tensor> grads;
  grads.reserve(slots_.size());
  for (Slot& s : slots_) {
    grads.push_back(s.param.grad());
    norm_sq += dot(grads.back(), grads.back());
  }
  const double norm = std::sqrt(norm_sq);
  const double clip =
      (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    Slot& s = slots_[i];
    Tensor& w = s.param.mutable_value();
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip;
      s.m[j] = config_.beta1 * s.m[j] + (1.0 - config_.beta1) * gj;
      s.v[j] = config_.beta2 * s.v[j] + (1.0 - config_.beta2) * gj * gj;
      const double mhat = s.m[j] / bc1;
      const double vhat = s.v[j] / bc2;
      w[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
    s.param.zero_grad();
  }
  return norm;
}

Tensor timestep_embedding(const std::vector<int>& timesteps, std::size_t dim,
                          double max_frequency, double min_frequency) {
  if (dim % 2 != 0) throw DimensionError("timestep embedding width must be even");
  if (!(max_frequency > 0.0) || !(min_frequency > 0.0) || min_frequency > max_frequency) {
    throw RangeError("invalid timestep embedding frequency range");
  }
  const std::size_t half = dim / 2;
  const double log_ratio = std::log(min_frequency / max_frequency);
  Tensor out({timesteps.size(), dim});
  for (std::size_t b = 0; b < timesteps.size(); ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = max_frequency * std::exp(log_ratio * static_cast<double>(i) /
                                                   static_cast<double>(half));
      const double arg = static_cast<double>(timesteps[b]) * freq;
      out[b * dim + i] = std::sin(arg);
      out[b * dim + half + i] = std::cos(arg);
    }
  }
  return out;
}

}  // namespace semstego::nn
