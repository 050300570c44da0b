#include "semstego/semcom/channel.hpp"

#include <cmath>
#include <limits>

#include "semstego/core/error.hpp"

namespace semstego::semcom {

double average_power(const Tensor& symbols) {
  if (symbols.empty()) return 0.0;
  return dot(symbols, symbols) / static_cast<double>(symbols.size());
}

SymbolVector SymbolVector::from_tensor(Tensor symbols) {
  SymbolVector s;
  s.power = average_power(symbols);
  s.symbols = std::move(symbols);
  return s;
}

double noise_variance(double snr_db) {
  if (!std::isfinite(snr_db)) throw RangeError("snr_db must be finite");
  if (snr_db >= kNoiselessSnrDb) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

Tensor awgn(const Tensor& symbols, double snr_db, double h, SeededRng& rng) {
  for (double v : symbols.values()) {
    if (!std::isfinite(v)) throw RangeError("awgn: non-finite channel symbol");
  }
  const double sd = std::sqrt(noise_variance(snr_db));
  Tensor out = h * symbols;
  if (symbols.empty()) return out;
  const Tensor n = gaussian_sample(rng, {symbols.size()});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sd * n[i];
  return out;
}

SymbolVector awgn_channel(const SymbolVector& s, const ChannelConfig& cfg, SeededRng& rng) {
  return SymbolVector::from_tensor(awgn(s.symbols, cfg.snr_db, cfg.h, rng));
}

double empirical_snr_db(const Tensor& sent, const Tensor& received, double h) {
  require_same_shape(sent, received, "empirical_snr_db");
  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < sent.size(); ++i) {
    const double n = received[i] - h * sent[i];
    ps += h * h * sent[i] * sent[i];
    pn += n * n;
  }
  if (pn == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ps / pn);
}

}  // namespace semstego::semcom
