#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "whmc/analysis.hpp"
#include "whmc/cartpole.hpp"
#include "whmc/config.hpp"
#include "whmc/estimation.hpp"
#include "whmc/server/wire.hpp"
#include "whmc/simkernel.hpp"

namespace whmc::server {

using nlohmann::json;

// Absolute deadlines t0 + n * period, so rounding never accumulates.
template <class Clock = std::chrono::steady_clock>
class TickScheduler {
 public:
  using time_point = typename Clock::time_point;
  using duration = typename Clock::duration;

  TickScheduler(double hz, time_point t0) : t0_(t0), n_(0) {
    if (!(hz > 0.0) || !std::isfinite(hz)) throw DomainError("tick rate must be positive");
    period_ns_ = std::chrono::nanoseconds(static_cast<std::int64_t>(std::llround(1e9 / hz)));
  }

  time_point deadline(std::uint64_t n) const {
    return t0_ + std::chrono::duration_cast<duration>(period_ns_ * static_cast<std::int64_t>(n));
  }
  time_point next() const { return deadline(n_ + 1); }
  std::uint64_t count() const { return n_; }
  // Advances to the next deadline; if more than one deadline has already
  // passed at `now`, the missed ones are reported and skipped.
  std::uint64_t advance(time_point now) {
    ++n_;
    std::uint64_t missed = 0;
    while (deadline(n_ + 1) <= now) {
      ++n_;
      ++missed;
    }
    return missed;
  }
  // Restart the deadline sequence at `t0` (after a pause).
  void rebase(time_point t0) {
    t0_ = t0;
    n_ = 0;
  }

 private:
  time_point t0_;
  std::chrono::nanoseconds period_ns_;
  std::uint64_t n_;
};

enum class Phase { idle, sh, decision, ha };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::sh: return "sh";
    case Phase::decision: return "decision";
    case Phase::ha: return "ha";
  }
  return "?";
}

struct LagRecord {
  std::uint64_t loop = 0;
  std::uint64_t visible_t = 0, press_t = 0;
  std::uint64_t lag_steps = 0;
  bool ha_ok = false;
};

struct FinalReport {
  std::string log;
  wire::VerdictReport report;
  LogVerdict detail;
};

// One live experiment. The operator's decision replaces the synthetic lag of
// the simulator: a loop waits after SH delivery until a keypress arrives
// while the weight is on the operator's (delayed) display.
class Session {
 public:
  Session(ScenarioConfig cfg, std::string id) : cfg_(std::move(cfg)), id_(std::move(id)) {
    sc_ = cfg_.scenario();
    sc_.regime = Regime::collab;
    sc_.validate();
    plant_ = cartpole::CartPole{cfg_.plant.params};
    reset_state();
  }

  const std::string& id() const { return id_; }
  bool running() const { return running_ && !ended_; }
  bool ended() const { return ended_; }
  std::uint64_t t() const { return t_; }
  Phase phase() const { return phase_; }
  const cartpole::State& state() const { return x_; }
  const std::vector<LagRecord>& lags() const { return lag_records_; }
  const SessionData& data() const { return data_; }
  const std::string& log() const { return log_; }
  double tick_hz() const { return 1.0 / cfg_.plant.params.ts; }

  void control(wire::Action a) {
    if (ended_) throw DomainError("session already ended");
    switch (a) {
      case wire::Action::start: running_ = true; break;
      case wire::Action::pause: running_ = false; break;
      case wire::Action::reset: reset_state(); break;
      case wire::Action::end:
        running_ = false;
        ended_ = true;
        break;
    }
    emit({{"type", "control"}, {"action", wire::to_string(a)}, {"t", t_}});
  }

  // Queued; takes effect at the next tick boundary.
  void press(const wire::KeyPress& k) { queue_.push_back(k); }

  std::optional<wire::StateTick> tick() {
    if (!running()) return std::nullopt;
    const std::uint64_t t = t_;
    double u_h = 0.0, u_m = 0.0;
    bool human_closed = false, machine_closed = false;

    if (pending_ && pending_t_ == t) {
      u_h = pending_uh_;
      human_closed = true;
      pending_ = false;
    }

    while (!queue_.empty()) {
      const auto k = queue_.front();
      queue_.pop_front();
      const bool valid_key = k.key == "s" || k.key == "S";
      if (valid_key && phase_ == Phase::decision && visible_t_) {
        LagRecord r;
        r.loop = loop_;
        r.visible_t = *visible_t_;
        r.press_t = t;
        r.lag_steps = t - *visible_t_;
        current_ = r;
        command_ = cartpole::human_policy(shown_);
        phase_ = Phase::ha;
        ha_t_ = t + 1;
      } else {
        const char* reason = !valid_key ? "key" : (phase_ == Phase::ha ? "decision_closed" : "no_weight_visible");
        emit({{"type", "spurious"}, {"t", t}, {"client_time", k.client_time}, {"reason", reason}});
      }
    }

    if (detail::single_attempt(g_sc_, sc_.code, streams_->sc) && detail::single_attempt(g_ca_, sc_.code, streams_->ca)) {
      machine_closed = true;
      u_m = plant_.machine_input(x_);
    }

    if (phase_ == Phase::idle) {
      ++loop_;
      phase_ = Phase::sh;
      sh_slots_ = 0;
    }
    switch (phase_) {
      case Phase::sh:
        ++sh_slots_;
        if (trial_->attempt(streams_->sh)) {
          delay_ = sh_slots_;
          delivered_ = true;
          phase_ = Phase::decision;
          visible_t_.reset();
        }
        break;
      case Phase::ha:
        if (t == ha_t_) {
          const bool ok = detail::single_attempt(g_ha_, sc_.code, streams_->ha);
          current_.ha_ok = ok;
          if (ok) {
            pending_ = true;
            pending_t_ = t + 1;
            pending_uh_ = command_;
          }
          lag_records_.push_back(current_);
          const double lag_s = static_cast<double>(current_.lag_steps) * cfg_.plant.params.ts;
          data_.lags_s.push_back(lag_s);
          emit({{"type", "lag"},
                {"loop", current_.loop},
                {"visible_t", current_.visible_t},
                {"press_t", current_.press_t},
                {"lag_steps", current_.lag_steps},
                {"lag_s", lag_s},
                {"ha_ok", ok}});
          phase_ = Phase::idle;
        }
        break;
      default: break;
    }

    const int label = case_label(machine_closed, human_closed);
    const auto x_prev = x_;
    x_ = plant_.step(x_, u_h, u_m, streams_->dist);
    history_.push_back(x_);
    ++t_;

    // Display x(t + 1 - d) where d is the SH delay of the last delivery.
    std::uint64_t shown_t = 0, staleness = t + 1;
    if (delivered_) {
      staleness = delay_;
      shown_t = t + 1 - delay_;
    }
    shown_ = history_[shown_t];
    // The lag clock restarts whenever the weight drops out of view.
    if (phase_ == Phase::decision) {
      if (shown_.mc <= 0.0) visible_t_.reset();
      else if (!visible_t_) visible_t_ = t;
    }

    if (have_prev_sample_) {
      prev_sample_.theta_next = x_prev.th;
      data_.samples.push_back(prev_sample_);
    }
    prev_sample_ = {label, x_prev.th, 0.0};
    have_prev_sample_ = true;

    emit({{"type", "tick"},
          {"t", t},
          {"x", x_prev.x},
          {"xd", x_prev.xd},
          {"th", x_prev.th},
          {"thd", x_prev.thd},
          {"mc", x_prev.mc},
          {"u_m", u_m},
          {"u_h", u_h},
          {"case", label},
          {"loop", loop_},
          {"phase", to_string(phase_)},
          {"staleness", staleness},
          {"shown_t", shown_t}});

    wire::StateTick st;
    st.t = t;
    st.x = shown_.x;
    st.xd = shown_.xd;
    st.th = shown_.th;
    st.thd = shown_.thd;
    st.m_c_visible = shown_.mc;
    st.staleness_steps = staleness;
    st.decision_open = phase_ == Phase::decision;
    return st;
  }

  // Ends the session (if not yet ended), closes the log and runs the
  // estimation pipeline on the log text.
  FinalReport finalize() {
    if (!ended_) control(wire::Action::end);
    if (!footer_written_) {
      emit({{"type", "footer"}, {"ticks", t_}});
      footer_written_ = true;
    }
    FinalReport out;
    out.log = log_;
    SessionData d;
    try {
      ingest_log(d, log_, "session " + id_);
      out.detail = verdict_from_session(cfg_.raw, d);
    } catch (const Error& e) {
      out.detail.warnings.push_back(e.what());
    }
    auto& r = out.report;
    r.warnings = out.detail.warnings;
    const auto& est = out.detail.estimate;
    if (est.gains)
      r.gains = json{{"alpha_hm", est.gains->alpha_hm}, {"alpha_m", est.gains->alpha_m},
                     {"alpha_h", est.gains->alpha_h}, {"alpha", est.gains->alpha}};
    if (est.chain) r.chain = json{{"states_steps", est.chain->states}, {"transition", est.chain->transition}};
    if (out.detail.verdict) {
      r.lhs = out.detail.verdict->lhs;
      r.stable = out.detail.verdict->stable;
    }
    return out;
  }

 private:
  void emit(json j) {
    j["v"] = kSchemaVersion;
    log_ += j.dump();
    log_ += '\n';
  }

  void reset_state() {
    streams_.emplace(sc_.seed);
    g_sc_ = mean_snr(sc_.sc);
    g_ca_ = mean_snr(sc_.ca);
    g_sh_ = mean_snr(sc_.sh);
    g_ha_ = mean_snr(sc_.ha);
    trial_.emplace(sc_.harq, g_sh_);
    x_ = cartpole::initial_state();
    shown_ = x_;
    history_.assign(1, x_);
    t_ = 0;
    phase_ = Phase::idle;
    loop_ = 0;
    sh_slots_ = 0;
    delay_ = 0;
    delivered_ = false;
    visible_t_.reset();
    pending_ = false;
    queue_.clear();
    lag_records_.clear();
    data_ = SessionData{};
    data_.ts = cfg_.plant.params.ts;
    have_prev_sample_ = false;
    footer_written_ = false;
    log_.clear();
    std::vector<double> states_s;
    for (int s : sc_.chain.states) states_s.push_back(s * cfg_.plant.params.ts);
    data_.lag_states_s = states_s;
    emit({{"type", "header"},
          {"session", id_},
          {"ts_s", cfg_.plant.params.ts},
          {"tick_hz", tick_hz()},
          {"seed", sc_.seed},
          {"config_hash", cfg_.hash},
          {"lag_states_s", states_s}});
  }

  ScenarioConfig cfg_;
  std::string id_;
  Scenario sc_;
  cartpole::CartPole plant_;
  std::optional<detail::Streams> streams_;
  std::optional<detail::HarqTrial> trial_;
  double g_sc_ = 0, g_ca_ = 0, g_sh_ = 0, g_ha_ = 0;

  bool running_ = false, ended_ = false, footer_written_ = false;
  std::uint64_t t_ = 0;
  cartpole::State x_, shown_;
  std::vector<cartpole::State> history_;

  Phase phase_ = Phase::idle;
  std::uint64_t loop_ = 0;
  std::uint64_t sh_slots_ = 0, delay_ = 0;
  bool delivered_ = false;
  std::optional<std::uint64_t> visible_t_;
  std::uint64_t ha_t_ = 0;
  LagRecord current_;
  double command_ = 0.0;
  bool pending_ = false;
  std::uint64_t pending_t_ = 0;
  double pending_uh_ = 0.0;

  std::deque<wire::KeyPress> queue_;
  std::vector<LagRecord> lag_records_;
  SessionData data_;
  cartpole::GainSample prev_sample_;
  bool have_prev_sample_ = false;
  std::string log_;
};

// Test and automation helper: presses `S` a fixed number of ticks after the
// decision phase first shows the weight, with lags drawn from a chain.
class ScriptedOperator {
 public:
  ScriptedOperator(LagChain chain, std::uint64_t seed) : chain_(std::move(chain)), rng_(make_stream(seed, "operator")) {
    idx_ = draw_index(stationary(chain_), rng_);
  }

  // Called with each StateTick; returns a press to send before the next tick.
  std::optional<wire::KeyPress> observe(const wire::StateTick& st) {
    if (!st.decision_open || st.m_c_visible <= 0.0) {
      armed_.reset();
      return std::nullopt;
    }
    if (!armed_) {
      armed_ = st.t + static_cast<std::uint64_t>(chain_.states[idx_]);
      return fire_if_due(st.t);
    }
    return fire_if_due(st.t);
  }

  std::size_t presses() const { return presses_; }

 private:
  std::optional<wire::KeyPress> fire_if_due(std::uint64_t t) {
    // A press sent after tick t is attributed to tick t + 1.
    if (t + 1 != *armed_) return std::nullopt;
    armed_.reset();
    idx_ = chain_step(chain_, idx_, rng_);
    ++presses_;
    return wire::KeyPress{static_cast<double>(t + 1), "s"};
  }

  LagChain chain_;
  Rng rng_;
  std::size_t idx_ = 0;
  std::optional<std::uint64_t> armed_;
  std::size_t presses_ = 0;
};

}  // namespace whmc::server
