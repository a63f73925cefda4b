#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace whmc {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s,
                                       std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Independent stream seed for one stochastic source of a run.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                           std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(master ^ fnv1a64(tag)) + index);
}

inline Rng make_stream(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(master, tag, index));
}

// Uniform on [0, 1).
inline double draw_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Exp(1) by inversion; the 1 - u form keeps the argument of log in (0, 1].
inline double draw_exp1(Rng& rng) {
  return -std::log1p(-draw_unit(rng));
}

}  // namespace whmc
