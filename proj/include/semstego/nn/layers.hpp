#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semstego/core/rng.hpp"
#include "semstego/nn/autograd.hpp"

namespace semstego::nn {

// Named trainable parameters. In declare mode (constructed with an RNG) new
// names are initialised uniformly in +-1/sqrt(fan_in); otherwise every
// declared name must already exist with the declared shape.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(SeededRng init_rng) : init_rng_(std::move(init_rng)) {}

  Var declare(const std::string& name, const Shape& shape, std::size_t fan_in);
  Var declare_zeros(const std::string& name, const Shape& shape);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  const Var& at(const std::string& name) const;
  const std::map<std::string, Var>& entries() const { return params_; }
  std::size_t parameter_count() const;

  void zero_grad();
  void fill(double value);
  // Sealing ends declare mode.
  void seal() { init_rng_.reset(); }

  // One array file per parameter, named after the parameter.
  void save(const std::filesystem::path& dir) const;
  static ParamStore load(const std::filesystem::path& dir);

  ParamStore clone() const;

 private:
  std::map<std::string, Var> params_;
  std::optional<SeededRng> init_rng_;
};

struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, std::size_t in_channels,
         std::size_t out_channels, std::size_t kernel, int stride = 1, int pad = -1);
  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }

  Var weight, bias;
  int stride = 1;
  int pad = 0;
};

struct ConvTranspose2d {
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t kernel, int stride, int pad);
  Var operator()(const Var& x) const { return conv_transpose2d(x, weight, bias, stride, pad); }

  Var weight, bias;
  int stride = 2;
  int pad = 1;
};

struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in_features,
         std::size_t out_features, bool with_bias = true);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }

  Var weight, bias;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global L2 gradient-norm clip; <= 0 disables.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig config);
  // Applies one update from the accumulated gradients, then clears them.
  // Returns the pre-clip gradient norm.
  double step();
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  struct Slot {
    Var param;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  AdamConfig config_;
  long step_count_ = 0;
};

// Sinusoidal embedding of integer timesteps, shape (B, dim).
// Frequencies are log-spaced from max_frequency down to min_frequency (rad per step).
Tensor timestep_embedding(const std::vector<int>& timesteps, std::size_t dim,
                          double max_frequency = 1.0, double min_frequency = 1e-4);

}  // namespace semstego::nn
