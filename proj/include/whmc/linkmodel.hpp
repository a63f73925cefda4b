#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "whmc/errors.hpp"
#include "whmc/quadrature.hpp"
#include "whmc/random.hpp"

namespace whmc {

inline constexpr double kSpeedOfLight = 3e8;

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

struct LinkBudget {
  double antenna_gain = 4.0;
  double carrier_freq_hz = 915e6;
  double distance_m = 40.0;
  double pathloss_exp = 2.9;
  double tx_power_mw = 199.52623149688796;  // 23 dBm
  double noise_power_mw = 1e-7;             // -70 dBm
  // An error-free link: infinite SNR, every transmission succeeds.
  bool perfect = false;

  static LinkBudget ideal() {
    LinkBudget b;
    b.perfect = true;
    return b;
  }

  void validate(const std::string& name = "link") const {
    if (perfect) return;
    auto pos = [&](double v, const char* field) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw DomainError(name + "." + field + " must be positive and finite");
    };
    pos(antenna_gain, "antenna_gain");
    pos(carrier_freq_hz, "carrier_freq_hz");
    pos(distance_m, "distance_m");
    pos(pathloss_exp, "pathloss_exp");
    pos(tx_power_mw, "tx_power_mw");
    pos(noise_power_mw, "noise_power_mw");
  }
};

struct CodeConfig {
  double payload_bits = 3000.0;
  double packet_len = 1500.0;

  double rate() const { return payload_bits / packet_len; }

  void validate() const {
    if (!(payload_bits > 0.0) || !(packet_len > 0.0) || !std::isfinite(rate()))
      throw DomainError("code: payload_bits and packet_len must be positive");
  }
};

// h_bar = A (c / (4 pi f_c d))^d_e
inline double mean_channel_gain(const LinkBudget& b) {
  b.validate();
  if (b.perfect) return std::numeric_limits<double>::infinity();
  const double ratio = kSpeedOfLight / (4.0 * std::numbers::pi * b.carrier_freq_hz * b.distance_m);
  return b.antenna_gain * std::pow(ratio, b.pathloss_exp);
}

inline double mean_snr(const LinkBudget& b) {
  if (b.perfect) return std::numeric_limits<double>::infinity();
  return mean_channel_gain(b) * b.tx_power_mw / b.noise_power_mw;
}

// Rayleigh block fading: power gain h ~ Exp(1) per slot.
inline double sample_snr(double mean_snr_value, Rng& rng) {
  if (std::isinf(mean_snr_value)) return mean_snr_value;
  return mean_snr_value * draw_exp1(rng);
}

inline double sample_snr(const LinkBudget& b, Rng& rng) { return sample_snr(mean_snr(b), rng); }

inline double gaussian_q(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double channel_dispersion(double snr) {
  const double t = 1.0 / (1.0 + snr);
  return (1.0 - t * t) * std::numbers::log2e * std::numbers::log2e;
}

inline double decode_error_prob(double snr, const CodeConfig& code) {
  if (std::isnan(snr) || snr < 0.0) throw DomainError("decode_error_prob: snr must be >= 0");
  if (snr == 0.0) return 1.0;
  if (std::isinf(snr)) return 0.0;
  const double c = std::log2(1.0 + snr);
  const double v = channel_dispersion(snr);
  const double e = gaussian_q((c - code.rate()) / std::sqrt(v / code.packet_len));
  return std::clamp(e, 0.0, 1.0);
}

// SNR at which capacity equals the code rate; the error curve drops through
// 1/2 there, so quadrature splits at this point.
inline double threshold_snr(const CodeConfig& code) { return std::exp2(code.rate()) - 1.0; }

// E[eps(gbar h)], h ~ Exp(1), integrated over the SNR gamma. The indicator of
// gamma < gamma* is integrated exactly; the remainder is concentrated in a
// window of a few dispersion widths around gamma*, which quadrature gets as
// its own interval.
inline double expected_error_prob(double gbar, const CodeConfig& code) {
  code.validate();
  if (std::isnan(gbar) || gbar < 0.0) throw DomainError("expected_error_prob: mean snr must be >= 0");
  if (gbar == 0.0) return 1.0;
  if (std::isinf(gbar)) return 0.0;
  const double gstar = threshold_snr(code);
  const double sigma = (1.0 + gstar) * std::numbers::ln2 * std::sqrt(channel_dispersion(gstar) / code.packet_len);
  const double lo = std::max(0.0, gstar - 40.0 * sigma), hi = gstar + 40.0 * sigma;
  auto weight = [&](double g) { return std::exp(-g / gbar) / gbar; };
  auto below = [&](double g) { return (decode_error_prob(g, code) - 1.0) * weight(g); };
  auto above = [&](double g) { return decode_error_prob(g, code) * weight(g); };
  const char* label = "expected_error_prob";
  double total = -std::expm1(-gstar / gbar);
  total += integrate(below, 0.0, lo, 1e-9, 1e-15, label).value;
  total += integrate(below, lo, gstar, 1e-9, 1e-15, label).value;
  total += integrate(above, gstar, hi, 1e-9, 1e-15, label).value;
  total += integrate(above, hi, std::numeric_limits<double>::infinity(), 1e-9, 1e-15, label).value;
  return std::clamp(total, 0.0, 1.0);
}

inline double expected_error_prob(const LinkBudget& b, const CodeConfig& code) {
  b.validate();
  return expected_error_prob(mean_snr(b), code);
}

inline double open_machine_loop_prob(const LinkBudget& sc, const LinkBudget& ca, const CodeConfig& code) {
  const double esc = expected_error_prob(sc, code);
  const double eca = expected_error_prob(ca, code);
  return 1.0 - (1.0 - esc) * (1.0 - eca);
}

}  // namespace whmc
