#pragma once

#include <cstdint>

#include "semstego/core/rng.hpp"
#include "semstego/core/tensor.hpp"

namespace semstego::semcom {

struct SymbolVector {
  Tensor symbols;  // (k)
  double power = 0.0;

  static SymbolVector from_tensor(Tensor symbols);
};

double average_power(const Tensor& symbols);

// At or above this SNR the channel is treated as noiseless.
inline constexpr double kNoiselessSnrDb = 60.0;

struct ChannelConfig {
  double snr_db = 10.0;
  double h = 1.0;
  std::uint64_t seed = 0;
  // Per-use stream; the pipeline derives it from the image index.
  std::uint64_t stream_id = 0;
};

// 10^(-snr_db/10); 0 at or above kNoiselessSnrDb.
double noise_variance(double snr_db);

// s' = h s + n, n ~ N(0, noise_variance(snr_db)). Works on any symbol layout.
Tensor awgn(const Tensor& symbols, double snr_db, double h, SeededRng& rng);
SymbolVector awgn_channel(const SymbolVector& s, const ChannelConfig& cfg, SeededRng& rng);

// 10 log10(P_signal / P_noise) measured from a transmitted/received pair.
double empirical_snr_db(const Tensor& sent, const Tensor& received, double h = 1.0);

}  // namespace semstego::semcom
