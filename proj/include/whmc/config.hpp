#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "whmc/cartpole.hpp"
#include "whmc/cycledist.hpp"
#include "whmc/errors.hpp"
#include "whmc/harq.hpp"
#include "whmc/humanmodel.hpp"
#include "whmc/io.hpp"
#include "whmc/linkmodel.hpp"
#include "whmc/random.hpp"
#include "whmc/simkernel.hpp"
#include "whmc/stability.hpp"

namespace whmc {

using json = nlohmann::json;

struct GridConfig {
  std::string pair = "alpha_hm,alpha_h";
  double x_min = 0.0, x_max = 1.5;
  int x_points = 31;
  double y_min = 0.0, y_max = 1.5;
  int y_points = 31;
};

struct AnalysisConfig {
  double tail_eps = 1e-9;
  std::uint64_t mc_budget = 1'000'000;
  std::uint64_t theta_seed = 20240917;
  Regime regime = Regime::collab;
  GridConfig grid;
  std::uint64_t oracle_cycles = 0;
};

struct SimulationConfig {
  std::uint64_t horizon = 1000;
  std::uint64_t seed = 1;
  std::uint64_t replications = 100;
  double divergence_cap = 1e12;
};

struct PlantConfig {
  std::string type = "cartpole";
  cartpole::Params params;
  cartpole::Penalty penalty = cartpole::theta_penalty();
};

struct ScenarioConfig {
  CodeConfig code;
  LinkBudget sc, ca, sh, ha;
  HarqConfig harq;
  LagChain chain;
  LagAdvance lag_advance = LagAdvance::per_loop;
  LagInit lag_init = LagInit::stationary;
  std::optional<LyapunovGains> gains;
  PlantConfig plant;
  SimulationConfig sim;
  AnalysisConfig analysis;
  std::string out_dir = "out";
  json raw;
  std::string hash;

  Scenario scenario() const {
    Scenario s;
    s.sc = sc;
    s.ca = ca;
    s.sh = sh;
    s.ha = ha;
    s.code = code;
    s.harq = harq;
    s.chain = chain;
    s.lag_advance = lag_advance;
    s.lag_init = lag_init;
    s.horizon = sim.horizon;
    s.seed = sim.seed;
    s.divergence_cap = sim.divergence_cap;
    return s;
  }

  ThetaOptions theta_options() const {
    ThetaOptions o;
    o.mc_budget = analysis.mc_budget;
    o.master_seed = analysis.theta_seed;
    return o;
  }
};

namespace detail {

// Field access on one JSON object; remembers which keys were read so that
// leftovers can be rejected.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  const json& at(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) throw ConfigError(name(k) + ": missing");
    return j_.at(k);
  }

  template <class T>
  T get(const std::string& k, const T& def) {
    seen_.insert(k);
    if (!j_.contains(k)) return def;
    return convert<T>(k, j_.at(k));
  }

  template <class T>
  T req(const std::string& k) {
    return convert<T>(k, at(k));
  }

  std::string name(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(name(it.key()) + ": unknown key");
  }

 private:
  template <class T>
  T convert(const std::string& k, const json& v) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(name(k) + ": expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(name(k) + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ConfigError(name(k) + ": must be >= 0");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(name(k) + ": expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(name(k) + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name(k) + ": " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline LinkBudget parse_link(const json& j, const std::string& path) {
  Fields f(j, path);
  LinkBudget b;
  b.perfect = f.get<bool>("perfect", false);
  if (b.perfect) {
    f.finish();
    return b;
  }
  b.antenna_gain = f.req<double>("antenna_gain");
  b.carrier_freq_hz = f.req<double>("carrier_freq_mhz") * 1e6;
  b.distance_m = f.req<double>("distance_m");
  b.pathloss_exp = f.req<double>("pathloss_exp");
  b.tx_power_mw = dbm_to_mw(f.req<double>("tx_power_dbm"));
  b.noise_power_mw = dbm_to_mw(f.req<double>("noise_power_dbm"));
  f.finish();
  try {
    b.validate(path);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return b;
}

inline std::vector<double> parse_doubles(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(path + ": expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline std::string config_hash(const json& j) { return io::hex64(fnv1a64(j.dump())); }

inline ScenarioConfig parse_config(const json& root) {
  using detail::Fields;
  ScenarioConfig c;
  c.raw = root;
  c.hash = config_hash(root);
  Fields top(root, "");

  {
    Fields f(top.at("code"), "code");
    c.code.payload_bits = f.req<double>("payload_bits");
    c.code.packet_len = f.req<double>("packet_len_symbols");
    f.finish();
    if (!(c.code.payload_bits > 0.0) || !(c.code.packet_len > 0.0))
      throw ConfigError("code: payload_bits and packet_len_symbols must be positive");
  }
  {
    Fields f(top.at("links"), "links");
    c.sc = detail::parse_link(f.at("sc"), "links.sc");
    c.ca = detail::parse_link(f.at("ca"), "links.ca");
    c.sh = detail::parse_link(f.at("sh"), "links.sh");
    c.ha = detail::parse_link(f.at("ha"), "links.ha");
    f.finish();
  }
  {
    Fields f(top.at("harq"), "harq");
    try {
      c.harq.scheme = parse_harq_scheme(f.req<std::string>("scheme"));
    } catch (const DomainError& e) {
      throw ConfigError(std::string("harq.scheme: ") + e.what());
    }
    c.harq.max_attempts = f.req<int>("max_attempts");
    if (c.harq.max_attempts < 1) throw ConfigError("harq.max_attempts: must be >= 1");
    c.harq.code = c.code;
    f.finish();
  }
  {
    Fields f(top.at("human"), "human");
    const json& st = f.at("states_steps");
    if (!st.is_array()) throw ConfigError("human.states_steps: expected an array of integers");
    for (const auto& v : st) {
      if (!v.is_number_integer()) throw ConfigError("human.states_steps: expected an array of integers");
      c.chain.states.push_back(v.get<int>());
    }
    const json& tr = f.at("transition");
    if (!tr.is_array()) throw ConfigError("human.transition: expected a matrix");
    for (std::size_t i = 0; i < tr.size(); ++i)
      c.chain.transition.push_back(detail::parse_doubles(tr[i], "human.transition[" + std::to_string(i) + "]"));
    try {
      c.chain.validate();
      c.lag_advance = parse_lag_advance(f.get<std::string>("lag_advance", "per_loop"));
      c.lag_init = parse_lag_init(f.get<std::string>("lag_init", "stationary"));
    } catch (const Error& e) {
      throw ConfigError(std::string("human: ") + e.what());
    }
    f.finish();
  }
  if (top.has("gains")) {
    Fields f(top.at("gains"), "gains");
    LyapunovGains g;
    g.alpha_hm = f.req<double>("alpha_hm");
    g.alpha_m = f.req<double>("alpha_m");
    g.alpha_h = f.req<double>("alpha_h");
    g.alpha = f.req<double>("alpha");
    f.finish();
    try {
      g.validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    c.gains = g;
  }
  if (top.has("plant")) {
    Fields f(top.at("plant"), "plant");
    auto& p = c.plant.params;
    c.plant.type = f.get<std::string>("type", "cartpole");
    if (c.plant.type != "cartpole" && c.plant.type != "null")
      throw ConfigError("plant.type: expected cartpole or null");
    p.pole_mass = f.get<double>("pole_mass_kg", p.pole_mass);
    p.cart_mass = f.get<double>("cart_mass_kg", p.cart_mass);
    p.gravity = f.get<double>("gravity_mps2", p.gravity);
    p.pole_len = f.get<double>("pole_length_m", p.pole_len);
    p.inertia = f.get<double>("inertia_kgm2", p.pole_mass * p.pole_len * p.pole_len / 4.0);
    p.pole_damping = f.get<double>("pole_damping", p.pole_damping);
    p.cart_damping = f.get<double>("cart_damping", p.cart_damping);
    p.ts = f.get<double>("ts_s", p.ts);
    p.eta = f.get<double>("eta", p.eta);
    p.weight = f.get<double>("weight_kg", p.weight);
    p.p_weight = f.get<double>("p_weight", p.p_weight);
    p.force_limit = f.get<double>("force_limit_n", p.force_limit);
    if (f.has("penalty")) {
      auto v = detail::parse_doubles(f.at("penalty"), "plant.penalty");
      if (v.size() != 5) throw ConfigError("plant.penalty: expected 5 diagonal entries (x, xdot, theta, thetadot, m_c)");
      std::copy(v.begin(), v.end(), c.plant.penalty.begin());
    }
    f.finish();
    try {
      p.validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    cartpole::validate_penalty(c.plant.penalty);
  }
  if (top.has("simulation")) {
    Fields f(top.at("simulation"), "simulation");
    c.sim.horizon = f.get<std::uint64_t>("horizon_steps", c.sim.horizon);
    c.sim.seed = f.get<std::uint64_t>("seed", c.sim.seed);
    c.sim.replications = f.get<std::uint64_t>("replications", c.sim.replications);
    c.sim.divergence_cap = f.get<double>("divergence_cap", c.sim.divergence_cap);
    f.finish();
    if (c.sim.horizon < 1) throw ConfigError("simulation.horizon_steps: must be >= 1");
    if (c.sim.replications < 1) throw ConfigError("simulation.replications: must be >= 1");
  }
  if (top.has("analysis")) {
    Fields f(top.at("analysis"), "analysis");
    auto& a = c.analysis;
    a.tail_eps = f.get<double>("tail_eps", a.tail_eps);
    a.mc_budget = f.get<std::uint64_t>("mc_budget", a.mc_budget);
    a.theta_seed = f.get<std::uint64_t>("theta_seed", a.theta_seed);
    a.oracle_cycles = f.get<std::uint64_t>("oracle_cycles", a.oracle_cycles);
    try {
      a.regime = parse_regime(f.get<std::string>("regime", "collab"));
    } catch (const DomainError& e) {
      throw ConfigError(std::string("analysis.regime: ") + e.what());
    }
    if (f.has("grid")) {
      Fields g(f.at("grid"), "analysis.grid");
      a.grid.pair = g.get<std::string>("pair", a.grid.pair);
      a.grid.x_min = g.get<double>("x_min", a.grid.x_min);
      a.grid.x_max = g.get<double>("x_max", a.grid.x_max);
      a.grid.x_points = g.get<int>("x_points", a.grid.x_points);
      a.grid.y_min = g.get<double>("y_min", a.grid.y_min);
      a.grid.y_max = g.get<double>("y_max", a.grid.y_max);
      a.grid.y_points = g.get<int>("y_points", a.grid.y_points);
      g.finish();
    }
    f.finish();
    if (!(a.tail_eps > 0.0 && a.tail_eps < 1e-2)) throw ConfigError("analysis.tail_eps: must lie in (0, 0.01)");
    if (a.mc_budget < 1000) throw ConfigError("analysis.mc_budget: must be >= 1000");
  }
  if (top.has("output")) {
    Fields f(top.at("output"), "output");
    c.out_dir = f.get<std::string>("dir", c.out_dir);
    f.finish();
  }
  top.finish();
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

// The case-study scenario: the reference links, IR-HARQ with N = 3, two lag
// states and the estimated gains.
inline json case_study_json() {
  auto link = [](double d) {
    return json{{"antenna_gain", 4.0},     {"carrier_freq_mhz", 915.0}, {"distance_m", d},
                {"pathloss_exp", 2.9},     {"tx_power_dbm", 23.0},      {"noise_power_dbm", -70.0}};
  };
  return json{
      {"code", {{"payload_bits", 3000}, {"packet_len_symbols", 1500}}},
      {"links", {{"sc", link(40.0)}, {"ca", link(40.0)}, {"sh", link(45.0)}, {"ha", link(45.0)}}},
      {"harq", {{"scheme", "IR"}, {"max_attempts", 3}}},
      {"human", {{"states_steps", {3, 7}}, {"transition", {{0.2576, 0.7424}, {0.4404, 0.5596}}}}},
      {"gains", {{"alpha_hm", 0.5271}, {"alpha_m", 0.7949}, {"alpha_h", 1.0196}, {"alpha", 1.0134}}},
      {"plant", {{"type", "cartpole"}, {"p_weight", 0.02}}},
      {"simulation", {{"horizon_steps", 1000}, {"seed", 1}, {"replications", 100}}},
      {"analysis", {{"tail_eps", 1e-9}, {"mc_budget", 1000000}, {"regime", "collab"}}},
  };
}

}  // namespace whmc
