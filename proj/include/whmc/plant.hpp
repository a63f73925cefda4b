#pragma once

#include <concepts>

#include "whmc/random.hpp"

namespace whmc {

// A discrete-time plant driven by one human and one machine input.
// step() must be a pure function of its arguments and the disturbance draws
// it takes from `rng`.
template <class P>
concept Plant = requires(const P& p, const typename P::State& s, double u, Rng& rng) {
  typename P::State;
  { p.machine_input(s) } -> std::convertible_to<double>;
  { p.human_input(s) } -> std::convertible_to<double>;
  { p.step(s, u, u, rng) } -> std::same_as<typename P::State>;
  { p.norm(s) } -> std::convertible_to<double>;
};

// Zero-dimensional plant used when only the loop statistics matter.
struct NullPlant {
  struct State {
    friend bool operator==(const State&, const State&) = default;
  };
  double machine_input(const State&) const { return 0.0; }
  double human_input(const State&) const { return 0.0; }
  State step(const State& s, double, double, Rng&) const { return s; }
  double norm(const State&) const { return 0.0; }
};

static_assert(Plant<NullPlant>);

}  // namespace whmc
