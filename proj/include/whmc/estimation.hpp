#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "whmc/cartpole.hpp"
#include "whmc/errors.hpp"
#include "whmc/humanmodel.hpp"
#include "whmc/io.hpp"
#include "whmc/stability.hpp"

namespace whmc {

inline constexpr int kSchemaVersion = 1;

// Parsed content of one or more NDJSON session logs (or plain lag lists).
struct SessionData {
  double ts = 0.05;
  std::vector<double> lag_states_s;  // from the log header, if any
  std::vector<double> lags_s;
  std::vector<cartpole::GainSample> samples;
  std::vector<std::string> warnings;
};

namespace detail {

inline void log_error(const std::string& src, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << src << ":" << line << ": " << what;
  throw DataError(os.str());
}

}  // namespace detail

// Accepts NDJSON session logs (records tagged by "type") or plain text with
// one lag in seconds per line. Consecutive tick records become gain samples.
inline void ingest_log(SessionData& d, const std::string& text, const std::string& src = "log") {
  auto ls = io::lines(text);
  bool any = false;
  bool have_prev = false;
  cartpole::GainSample prev;
  std::uint64_t prev_t = 0;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const std::string& raw = ls[i];
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    any = true;
    const std::size_t lineno = i + 1;
    if (raw.find('{') == std::string::npos) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (raw.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("trailing");
        d.lags_s.push_back(v);
      } catch (const std::exception&) {
        detail::log_error(src, lineno, "expected a lag in seconds or a JSON record");
      }
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      detail::log_error(src, lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
      detail::log_error(src, lineno, "record without a \"type\" tag");
    if (!j.contains("v") || j["v"] != kSchemaVersion) detail::log_error(src, lineno, "unsupported schema version");
    const std::string type = j["type"];
    try {
      if (type == "header") {
        d.ts = j.at("ts_s").get<double>();
        if (!(d.ts > 0.0)) detail::log_error(src, lineno, "ts_s must be positive");
        if (j.contains("lag_states_s")) d.lag_states_s = j["lag_states_s"].get<std::vector<double>>();
      } else if (type == "tick") {
        const auto t = j.at("t").get<std::uint64_t>();
        const double th = j.at("th").get<double>();
        if (have_prev && t == prev_t + 1) {
          prev.theta_next = th;
          d.samples.push_back(prev);
        }
        const int c = j.at("case").get<int>();
        if (c < 1 || c > 4) detail::log_error(src, lineno, "case label must be 1..4");
        prev = {c, th, 0.0};
        prev_t = t;
        have_prev = true;
      } else if (type == "lag") {
        d.lags_s.push_back(j.at("lag_s").get<double>());
      } else if (type == "spurious" || type == "footer" || type == "control") {
      } else {
        detail::log_error(src, lineno, "unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      detail::log_error(src, lineno, std::string("bad field: ") + e.what());
    }
  }
  if (!any) throw InsufficientDataError(src + ": empty log");
}

struct EstimateReport {
  std::optional<LagChain> chain;
  std::vector<double> stationary_dist;
  std::optional<LyapunovGains> gains;
  std::array<std::size_t, 4> gain_samples{};
  std::size_t lags = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["lags"] = lags;
    if (chain) {
      j["human"] = {{"states_steps", chain->states}, {"transition", chain->transition}};
      j["stationary"] = stationary_dist;
    }
    if (gains)
      j["gains"] = {{"alpha_hm", gains->alpha_hm}, {"alpha_m", gains->alpha_m}, {"alpha_h", gains->alpha_h},
                    {"alpha", gains->alpha}};
    j["gain_samples"] = gain_samples;
    j["warnings"] = warnings;
    return j;
  }
};

inline const std::vector<double>& default_lag_states_s() {
  static const std::vector<double> s{0.15, 0.35};
  return s;
}

// Lag states: explicit argument, else the log header, else {0.15, 0.35} s.
inline EstimateReport estimate_session(const SessionData& d, std::vector<double> states_s = {}) {
  if (states_s.empty()) states_s = d.lag_states_s.empty() ? default_lag_states_s() : d.lag_states_s;
  EstimateReport r;
  r.warnings = d.warnings;
  r.lags = d.lags_s.size();
  if (d.lags_s.size() >= 2) {
    auto q = quantize_lags(d.lags_s, states_s, d.ts);
    auto est = estimate_chain(q.lags, q.states);
    r.warnings.insert(r.warnings.end(), est.warnings.begin(), est.warnings.end());
    try {
      r.stationary_dist = stationary(est.chain);
      r.chain = est.chain;
    } catch (const ModelError& e) {
      r.warnings.push_back(std::string("estimated chain unusable: ") + e.what());
    }
  } else {
    r.warnings.push_back("fewer than two lag measurements; no chain estimate");
  }
  for (const auto& s : d.samples)
    if (cartpole::lyapunov_v(s.theta) > 0.0) ++r.gain_samples[static_cast<std::size_t>(s.case_label - 1)];
  if (!d.samples.empty()) {
    try {
      r.gains = cartpole::estimate_gains(d.samples).gains;
    } catch (const InsufficientDataError& e) {
      r.warnings.push_back(e.what());
    }
  } else {
    r.warnings.push_back("no tick records; no gain estimate");
  }
  return r;
}

}  // namespace whmc
