#include "semstego/diffusion/train.hpp"

#include <cmath>
#include <numeric>

#include "semstego/core/error.hpp"

namespace semstego::diffusion {

namespace {

std::size_t item_size(const Tensor& batch) { return batch.size() / batch.dim(0); }

void noisy_latents(const Tensor& z0, const std::vector<int>& t, const Tensor& eps,
                   const NoiseSchedule& schedule, Tensor& z_t) {
  const std::size_t n = item_size(z0);
  z_t = Tensor(z0.shape());
  for (std::size_t b = 0; b < z0.dim(0); ++b) {
    const double a = schedule.alpha_bars[t[b]];
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    for (std::size_t i = b * n; i < (b + 1) * n; ++i) z_t[i] = sa * z0[i] + sn * eps[i];
  }
}

void shuffle(std::vector<std::size_t>& order, SeededRng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
}

void check_dataset(const LatentDataset& d, const char* what) {
  if (d.mu.rank() != 4 || d.mu.shape() != d.log_var.shape() || d.keys.size() != d.mu.dim(0)) {
    throw DimensionError(std::string(what) + ": inconsistent latent dataset");
  }
}

}  // namespace

ValidationDraws make_validation_draws(const LatentDataset& data, const NoiseSchedule& schedule,
                                      SeededRng& rng) {
  ValidationDraws d;
  for (std::size_t b = 0; b < data.mu.dim(0); ++b) {
    d.t.push_back(1 + static_cast<int>(rng.uniform_index(schedule.train_timesteps)));
  }
  d.eps = gaussian_sample(rng, data.mu.shape());
  noisy_latents(data.mu, d.t, d.eps, schedule, d.z_t);
  return d;
}

double validation_loss(const NoisePredictor& predictor, const LatentDataset& data,
                       const ValidationDraws& draws) {
  nn::NoGradGuard guard;
  const std::size_t n = item_size(data.mu);
  const std::size_t total = data.mu.dim(0);
  double sq = 0.0;
  for (std::size_t b0 = 0; b0 < total; b0 += 64) {
    const std::size_t b1 = std::min(total, b0 + 64);
    Shape s = data.mu.shape();
    s[0] = b1 - b0;
    Tensor z(s);
    std::copy(draws.z_t.data() + b0 * n, draws.z_t.data() + b1 * n, z.data());
    std::vector<int> t(draws.t.begin() + b0, draws.t.begin() + b1);
    std::vector<const Tensor*> e;
    for (std::size_t b = b0; b < b1; ++b) e.push_back(&data.keys[b].vectors);
    const Tensor pred = predictor.forward(nn::Var(z), t, e).value();
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - draws.eps[b0 * n + i];
      sq += d * d;
    }
  }
  return sq / static_cast<double>(data.mu.size());
}

NoisePredictor train_noise_predictor(const LatentDataset& train, const LatentDataset& validation,
                                     const NoiseSchedule& schedule,
                                     const PredictorArchitecture& arch,
                                     const DiffusionTrainOptions& options) {
  check_dataset(train, "train_noise_predictor");
  if (train.mu.dim(0) == 0) throw RangeError("train_noise_predictor: empty dataset");
  const LatentDataset& val = validation.keys.empty() ? train : validation;
  check_dataset(val, "train_noise_predictor");
  const DiffusionSettings& s = options.settings;

  NoisePredictor predictor(arch, SeededRng(options.seed, make_stream_id(StreamStage::diffusion_init, 0)));
  SeededRng rng(options.seed, make_stream_id(StreamStage::diffusion_train, 0));
  SeededRng val_rng(options.seed, make_stream_id(StreamStage::diffusion_validation, 0));
  const ValidationDraws draws = make_validation_draws(val, schedule, val_rng);
  double zero_baseline = 0.0;
  for (double e : draws.eps.values()) zero_baseline += e * e;
  zero_baseline /= static_cast<double>(draws.eps.size());

  nn::Adam opt(predictor.params(), nn::AdamConfig{.learning_rate = s.learning_rate});
  const Tensor null_vec({1, arch.d_embed}, 0.0);
  const std::size_t n_items = train.mu.dim(0);
  const std::size_t n = item_size(train.mu);
  const std::size_t batch = std::max<std::size_t>(1, s.batch_size);
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  std::size_t null_samples = 0, cond_samples = 0;

  std::vector<nn::Var> live;
  std::vector<Tensor> shadow;
  for (const auto& [name, var] : predictor.params().entries()) {
    live.push_back(var);
    shadow.push_back(var.value());
  }
  std::size_t updates = 0;
  auto swap_shadow = [&] {
    for (std::size_t i = 0; i < live.size(); ++i) std::swap(live[i].mutable_value(), shadow[i]);
  };
  nlohmann::json history = nlohmann::json::array();

  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    const double progress = s.epochs > 1 ? static_cast<double>(epoch) / (s.epochs - 1) : 0.0;
    opt.set_learning_rate(s.learning_rate * (0.55 + 0.45 * std::cos(M_PI * progress)));
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < n_items; b0 += batch) {
      const std::size_t b1 = std::min(n_items, b0 + batch);
      Shape shape = train.mu.shape();
      shape[0] = b1 - b0;
      // z0 = mu + sigma * eps0 drawn afresh each visit.
      Tensor z0(shape);
      const Tensor eps0 = gaussian_sample(rng, shape);
      std::vector<int> t;
      std::vector<const Tensor*> keys;
      for (std::size_t j = 0; j < b1 - b0; ++j) {
        const std::size_t item = order[b0 + j];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t src = item * n + i;
          z0[j * n + i] = train.mu[src] + std::exp(0.5 * train.log_var[src]) * eps0[j * n + i];
        }
        t.push_back(1 + static_cast<int>(rng.uniform_index(schedule.train_timesteps)));
        if (rng.uniform() < s.null_key_dropout) {
          keys.push_back(&null_vec);
          ++null_samples;
        } else {
          keys.push_back(&train.keys[item].vectors);
          ++cond_samples;
        }
      }
      const Tensor eps = gaussian_sample(rng, shape);
      Tensor z_t;
      noisy_latents(z0, t, eps, schedule, z_t);
      nn::Var loss = nn::mse_loss(predictor.forward(nn::Var(z_t), t, keys), eps);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingDivergedError("noise predictor loss became non-finite at epoch " +
                                    std::to_string(epoch + 1));
      }
      loss.backward();
      opt.step();
      if (s.ema_decay > 0.0) {
        ++updates;
        const double d = std::min(s.ema_decay, (1.0 + updates) / (10.0 + updates));
        for (std::size_t i = 0; i < live.size(); ++i) {
          const Tensor& v = live[i].value();
          Tensor& e = shadow[i];
          for (std::size_t j = 0; j < e.size(); ++j) e[j] = d * e[j] + (1.0 - d) * v[j];
        }
      }
      loss_sum += value;
      ++batches;
    }
    if (s.ema_decay > 0.0) swap_shadow();
    history.push_back({{"epoch", epoch + 1},
                       {"train_loss", loss_sum / static_cast<double>(batches)},
                       {"val_loss", validation_loss(predictor, val, draws)}});
    if (s.ema_decay > 0.0) swap_shadow();
  }
  if (s.ema_decay > 0.0 && updates > 0) swap_shadow();

  predictor.manifest = {{"architecture", arch},
                        {"trained", s.epochs > 0},
                        {"dataset_id", options.dataset_id},
                        {"seed", options.seed},
                        {"epochs", s.epochs},
                        {"batch_size", s.batch_size},
                        {"learning_rate", s.learning_rate},
                        {"null_key_dropout", s.null_key_dropout},
                        {"ema_decay", s.ema_decay},
                        {"null_key_samples", null_samples},
                        {"conditional_samples", cond_samples},
                        {"schedule",
                         {{"train_timesteps", schedule.train_timesteps},
                          {"beta_start", schedule.betas.front()},
                          {"beta_end", schedule.betas.back()}}},
                        {"zero_predictor_val_loss", zero_baseline},
                        {"final_val_loss", history.empty() ? zero_baseline
                                                           : history.back()["val_loss"].get<double>()},
                        {"history", history}};
  return predictor;
}

}  // namespace semstego::diffusion
