#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "whmc/errors.hpp"
#include "whmc/estimation.hpp"

namespace whmc::wire {

using nlohmann::json;

inline constexpr int kVersion = kSchemaVersion;

struct StateTick {
  std::uint64_t t = 0;
  double x = 0, xd = 0, th = 0, thd = 0;
  double m_c_visible = 0;
  std::uint64_t staleness_steps = 0;
  // A human loop is waiting for the operator's decision.
  bool decision_open = false;
  friend bool operator==(const StateTick&, const StateTick&) = default;
};

struct KeyPress {
  double client_time = 0;
  std::string key = "s";
  friend bool operator==(const KeyPress&, const KeyPress&) = default;
};

enum class Action { start, pause, reset, end };

inline const char* to_string(Action a) {
  switch (a) {
    case Action::start: return "start";
    case Action::pause: return "pause";
    case Action::reset: return "reset";
    case Action::end: return "end";
  }
  return "?";
}

struct SessionControl {
  Action action = Action::start;
  friend bool operator==(const SessionControl&, const SessionControl&) = default;
};

struct VerdictReport {
  std::optional<json> gains;  // {alpha_hm, alpha_m, alpha_h, alpha}
  std::optional<json> chain;  // {states_steps, transition}
  std::optional<double> lhs;
  std::optional<bool> stable;
  std::vector<std::string> warnings;
  friend bool operator==(const VerdictReport&, const VerdictReport&) = default;
};

// Sent on protocol errors and rejected connections.
struct ErrorMessage {
  std::string message;
  friend bool operator==(const ErrorMessage&, const ErrorMessage&) = default;
};

using Message = std::variant<StateTick, KeyPress, SessionControl, VerdictReport, ErrorMessage>;

inline json to_json(const Message& m) {
  json j;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, StateTick>) {
          j = {{"type", "state_tick"}, {"t", v.t},     {"x", v.x},
               {"xd", v.xd},           {"th", v.th},   {"thd", v.thd},
               {"m_c_visible", v.m_c_visible},         {"staleness_steps", v.staleness_steps},
               {"decision_open", v.decision_open}};
        } else if constexpr (std::is_same_v<T, KeyPress>) {
          j = {{"type", "key_press"}, {"client_time", v.client_time}, {"key", v.key}};
        } else if constexpr (std::is_same_v<T, SessionControl>) {
          j = {{"type", "session_control"}, {"action", to_string(v.action)}};
        } else if constexpr (std::is_same_v<T, VerdictReport>) {
          j = {{"type", "verdict_report"}};
          j["gains"] = v.gains ? *v.gains : json(nullptr);
          j["chain"] = v.chain ? *v.chain : json(nullptr);
          j["lhs"] = v.lhs ? json(*v.lhs) : json(nullptr);
          j["stable"] = v.stable ? json(*v.stable) : json(nullptr);
          j["warnings"] = v.warnings;
        } else {
          j = {{"type", "error"}, {"message", v.message}};
        }
      },
      m);
  j["v"] = kVersion;
  return j;
}

inline std::string encode(const Message& m) { return to_json(m).dump(); }

namespace detail {

template <class T>
T field(const json& j, const char* k) {
  if (!j.contains(k)) throw DataError(std::string("message: missing field '") + k + "'");
  try {
    return j.at(k).get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("message: bad field '") + k + "'");
  }
}

template <class T>
std::optional<T> opt_field(const json& j, const char* k) {
  if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
  return field<T>(j, k);
}

}  // namespace detail

inline Message decode(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("message: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("message: expected an object");
  const auto type = detail::field<std::string>(j, "type");
  if (detail::field<int>(j, "v") != kVersion) throw DataError("message: unsupported schema version");
  using detail::field;
  if (type == "state_tick") {
    StateTick s;
    s.t = field<std::uint64_t>(j, "t");
    s.x = field<double>(j, "x");
    s.xd = field<double>(j, "xd");
    s.th = field<double>(j, "th");
    s.thd = field<double>(j, "thd");
    s.m_c_visible = field<double>(j, "m_c_visible");
    s.staleness_steps = field<std::uint64_t>(j, "staleness_steps");
    s.decision_open = j.contains("decision_open") ? field<bool>(j, "decision_open") : false;
    return s;
  }
  if (type == "key_press") return KeyPress{field<double>(j, "client_time"), field<std::string>(j, "key")};
  if (type == "session_control") {
    const auto a = field<std::string>(j, "action");
    if (a == "start") return SessionControl{Action::start};
    if (a == "pause") return SessionControl{Action::pause};
    if (a == "reset") return SessionControl{Action::reset};
    if (a == "end") return SessionControl{Action::end};
    throw DataError("message: unknown session action '" + a + "'");
  }
  if (type == "verdict_report") {
    VerdictReport r;
    r.gains = detail::opt_field<json>(j, "gains");
    r.chain = detail::opt_field<json>(j, "chain");
    r.lhs = detail::opt_field<double>(j, "lhs");
    r.stable = detail::opt_field<bool>(j, "stable");
    if (j.contains("warnings")) r.warnings = field<std::vector<std::string>>(j, "warnings");
    return r;
  }
  if (type == "error") return ErrorMessage{field<std::string>(j, "message")};
  throw DataError("message: unknown type '" + type + "'");
}

}  // namespace whmc::wire
