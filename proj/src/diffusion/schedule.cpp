#include "semstego/diffusion/schedule.hpp"

#include <cmath>

#include "semstego/core/error.hpp"

namespace semstego::diffusion {

NoiseSchedule make_schedule(int train_timesteps, double beta_start, double beta_end) {
  if (train_timesteps < 1) throw RangeError("train_timesteps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw RangeError("schedule requires 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.train_timesteps = train_timesteps;
  s.betas.resize(train_timesteps);
  s.alpha_bars.resize(train_timesteps + 1);
  s.alpha_bars[0] = 1.0;
  for (int i = 0; i < train_timesteps; ++i) {
    const double frac = train_timesteps > 1 ? static_cast<double>(i) / (train_timesteps - 1) : 0.0;
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bars[i + 1] = s.alpha_bars[i] * (1.0 - s.betas[i]);
  }
  return s;
}

std::vector<int> ddim_timesteps(int train_timesteps, int ddim_steps) {
  if (ddim_steps < 1) throw RangeError("ddim_steps must be >= 1");
  if (ddim_steps > train_timesteps) throw RangeError("ddim_steps must not exceed train_timesteps");
  std::vector<int> ts(ddim_steps);
  for (int i = 0; i < ddim_steps; ++i) {
    ts[i] = static_cast<int>(static_cast<long long>(i) * train_timesteps / ddim_steps);
  }
  return ts;
}

std::vector<int> ddim_trajectory_nodes(int train_timesteps, int ddim_steps) {
  std::vector<int> nodes = ddim_timesteps(train_timesteps, ddim_steps);
  nodes.push_back(train_timesteps);
  return nodes;
}

}  // namespace semstego::diffusion
