#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace whmc {

// Probability mass function on the non-negative integers, stored densely:
// probs[k] = P[X = k] for k < probs.size(). `tail` is the mass that was
// truncated away beyond the last stored index.
struct Pmf {
  std::vector<double> probs;
  double tail = 0.0;

  double operator[](std::size_t k) const { return k < probs.size() ? probs[k] : 0.0; }
  std::size_t size() const { return probs.size(); }

  double mass() const {
    double s = 0.0;
    for (double p : probs) s += p;
    return s;
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) s += static_cast<double>(k) * probs[k];
    return s;
  }

  double second_moment() const {
    double s = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      const double x = static_cast<double>(k);
      s += x * x * probs[k];
    }
    return s;
  }

  // Smallest k with positive mass; size() if empty.
  std::size_t min_support() const {
    for (std::size_t k = 0; k < probs.size(); ++k)
      if (probs[k] > 0.0) return k;
    return probs.size();
  }

  void trim_trailing_zeros() {
    while (!probs.empty() && probs.back() == 0.0) probs.pop_back();
  }

  static Pmf point_mass(std::size_t k) {
    Pmf p;
    p.probs.assign(k + 1, 0.0);
    p.probs[k] = 1.0;
    return p;
  }
};

// Linear convolution of two dense sequences, cut at index `max_index`.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b,
                                    std::size_t max_index) {
  if (a.empty() || b.empty()) return {};
  const std::size_t n = std::min(a.size() + b.size() - 1, max_index + 1);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < a.size() && i < n; ++i) {
    if (a[i] == 0.0) continue;
    const std::size_t jmax = std::min(b.size(), n - i);
    for (std::size_t j = 0; j < jmax; ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

inline Pmf convolve(const Pmf& a, const Pmf& b, std::size_t max_index) {
  Pmf out;
  out.probs = convolve(std::span<const double>(a.probs), std::span<const double>(b.probs), max_index);
  const double kept = out.mass();
  out.tail = std::max(0.0, a.mass() * b.mass() - kept) + a.tail + b.tail;
  return out;
}

// Total variation distance 0.5 * sum |p_k - q_k| over the union of supports.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
  const std::size_t n = std::max(p.size(), q.size());
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = k < p.size() ? p[k] : 0.0;
    const double b = k < q.size() ? q[k] : 0.0;
    s += std::abs(a - b);
  }
  return 0.5 * s;
}

inline double total_variation(const Pmf& p, const Pmf& q) {
  return total_variation(std::span<const double>(p.probs), std::span<const double>(q.probs));
}

// Empirical pmf from integer-valued counts; counts[k] = #observations equal to k.
inline Pmf empirical_pmf(std::span<const std::size_t> counts) {
  Pmf p;
  std::size_t n = 0;
  for (auto c : counts) n += c;
  p.probs.assign(counts.size(), 0.0);
  if (n == 0) return p;
  for (std::size_t k = 0; k < counts.size(); ++k)
    p.probs[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
  return p;
}

}  // namespace whmc
