#pragma once

#include <vector>

namespace semstego::diffusion {

struct NoiseSchedule {
  int train_timesteps = 0;
  std::vector<double> betas;       // betas[t - 1] is the variance added at step t
  std::vector<double> alpha_bars;  // alpha_bars[0] = 1, length train_timesteps + 1
};

// Linear betas; requires 0 < beta_start <= beta_end < 1.
NoiseSchedule make_schedule(int train_timesteps, double beta_start, double beta_end);

// floor(i * T / steps) for i < steps: starts at 0, strictly increasing.
std::vector<int> ddim_timesteps(int train_timesteps, int ddim_steps);

// ddim_timesteps followed by the terminal node T.
std::vector<int> ddim_trajectory_nodes(int train_timesteps, int ddim_steps);

}  // namespace semstego::diffusion
