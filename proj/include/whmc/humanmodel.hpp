#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "whmc/errors.hpp"
#include "whmc/pmf.hpp"
#include "whmc/random.hpp"

namespace whmc {

// Finite-state Markov chain over human decision lags (in slots).
struct LagChain {
  std::vector<int> states;
  std::vector<std::vector<double>> transition;

  std::size_t size() const { return states.size(); }
  int max_state() const { return *std::max_element(states.begin(), states.end()); }
  int min_state() const { return *std::min_element(states.begin(), states.end()); }

  std::optional<std::size_t> index_of(int s) const {
    for (std::size_t i = 0; i < states.size(); ++i)
      if (states[i] == s) return i;
    return std::nullopt;
  }

  void validate() const {
    if (states.empty()) throw ModelError("lag chain: empty state set");
    if (transition.size() != states.size())
      throw ModelError("lag chain: transition matrix has wrong number of rows");
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (states[i] < 1) throw ModelError("lag chain: states must be positive integers");
      for (std::size_t j = 0; j < i; ++j)
        if (states[i] == states[j]) throw ModelError("lag chain: duplicate state " + std::to_string(states[i]));
      const auto& row = transition[i];
      if (row.size() != states.size()) throw ModelError("lag chain: transition matrix is not square");
      double s = 0.0;
      for (double p : row) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ModelError("lag chain: negative or non-finite transition entry");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "lag chain: row " << i << " sums to " << s;
        throw ModelError(os.str());
      }
    }
  }
};

namespace chains {

inline std::vector<std::vector<double>> prolonged() { return {{0.9, 0.1}, {0.1, 0.9}}; }
inline std::vector<std::vector<double>> random_response() { return {{0.5, 0.5}, {0.5, 0.5}}; }
inline std::vector<std::vector<double>> variable() { return {{0.1, 0.9}, {0.9, 0.1}}; }

}  // namespace chains

namespace detail {

inline std::vector<bool> reachable_from(const std::vector<std::vector<double>>& m, std::size_t start, bool reverse) {
  const std::size_t n = m.size();
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    auto i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j) {
      const double p = reverse ? m[j][i] : m[i][j];
      if (p > 0.0 && !seen[j]) {
        seen[j] = true;
        stack.push_back(j);
      }
    }
  }
  return seen;
}

}  // namespace detail

inline void check_irreducible(const LagChain& c) {
  for (bool rev : {false, true}) {
    auto seen = detail::reachable_from(c.transition, 0, rev);
    std::vector<int> missing;
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (!seen[i]) missing.push_back(c.states[i]);
    if (!missing.empty()) {
      std::ostringstream os;
      os << "lag chain is reducible: state(s)";
      for (int s : missing) os << ' ' << s;
      os << (rev ? " cannot reach state " : " unreachable from state ") << c.states[0];
      throw ModelError(os.str());
    }
  }
}

// Solves v M = v, sum v = 1 directly (no power iteration, so periodic chains
// are fine).
inline std::vector<double> stationary(const LagChain& c) {
  c.validate();
  check_irreducible(c);
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(j, i) = c.transition[i][j] - (i == j ? 1.0 : 0.0);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  a.row(n - 1).setOnes();
  rhs(n - 1) = 1.0;
  Eigen::VectorXd v = a.fullPivLu().solve(rhs);
  std::vector<double> out(static_cast<std::size_t>(n));
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(v(i))) throw NumericalError("stationary: singular system");
    out[static_cast<std::size_t>(i)] = std::max(0.0, v(i));
    s += out[static_cast<std::size_t>(i)];
  }
  for (auto& x : out) x /= s;
  return out;
}

// P_m(k, s): probability that m consecutive lags sum to k and the m-th lag is
// in state s. Indexed [m-1][k][s].
struct LagSumTable {
  std::vector<int> states;
  int k_max = 0;
  std::vector<std::vector<std::vector<double>>> p;

  int m_max() const { return static_cast<int>(p.size()); }

  // Marginal v_{k,m}.
  Pmf marginal(int m) const {
    Pmf out;
    out.probs.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
    const auto& t = p.at(static_cast<std::size_t>(m - 1));
    for (std::size_t k = 0; k < t.size(); ++k)
      for (double x : t[k]) out.probs[k] += x;
    out.tail = std::max(0.0, 1.0 - out.mass());
    out.trim_trailing_zeros();
    return out;
  }
};

inline LagSumTable lag_sum_table(const LagChain& c, int m_max, int k_max,
                                 std::optional<std::vector<double>> initial = std::nullopt,
                                 double eps_tail = 1e-9) {
  c.validate();
  if (m_max < 1) throw DomainError("lag_sum_table: m_max must be >= 1");
  if (k_max < m_max * c.min_state()) throw DomainError("lag_sum_table: k_max < m_max * min(S)");
  const std::vector<double> init = initial ? *initial : stationary(c);
  if (init.size() != c.size()) throw DomainError("lag_sum_table: initial distribution has wrong size");
  const std::size_t ns = c.size();
  const auto kk = static_cast<std::size_t>(k_max);

  LagSumTable t;
  t.states = c.states;
  t.k_max = k_max;
  t.p.assign(static_cast<std::size_t>(m_max), std::vector<std::vector<double>>(kk + 1, std::vector<double>(ns, 0.0)));
  for (std::size_t s = 0; s < ns; ++s) {
    const auto k = static_cast<std::size_t>(c.states[s]);
    if (k <= kk) t.p[0][k][s] += init[s];
  }
  for (std::size_t m = 1; m < static_cast<std::size_t>(m_max); ++m) {
    const auto& prev = t.p[m - 1];
    auto& cur = t.p[m];
    for (std::size_t s = 0; s < ns; ++s) {
      const auto step = static_cast<std::size_t>(c.states[s]);
      for (std::size_t k = step; k <= kk; ++k) {
        double acc = 0.0;
        for (std::size_t sp = 0; sp < ns; ++sp) acc += prev[k - step][sp] * c.transition[sp][s];
        cur[k][s] = acc;
      }
    }
  }
  for (int m = 1; m <= m_max; ++m) {
    const double tail = t.marginal(m).tail;
    if (tail > eps_tail) {
      std::ostringstream os;
      os << "lag_sum_table: k_max=" << k_max << " loses mass " << tail << " at m=" << m;
      throw TruncationError(os.str(), tail);
    }
  }
  return t;
}

struct ChainEstimate {
  LagChain chain;
  std::vector<std::size_t> row_counts;
  std::vector<std::string> warnings;
};

// Maximum-likelihood transition matrix from an observed state sequence.
// Rows never left fall back to uniform.
inline ChainEstimate estimate_chain(const std::vector<int>& seq, const std::vector<int>& states) {
  if (seq.size() < 2) throw InsufficientDataError("estimate_chain: need at least two observations");
  if (states.empty()) throw DomainError("estimate_chain: empty state set");
  ChainEstimate est;
  est.chain.states = states;
  const std::size_t n = states.size();
  std::vector<std::vector<double>> counts(n, std::vector<double>(n, 0.0));
  auto idx = [&](int s, std::size_t pos) {
    for (std::size_t i = 0; i < n; ++i)
      if (states[i] == s) return i;
    std::ostringstream os;
    os << "estimate_chain: observation " << pos << " has lag " << s << " outside the state set";
    throw DataError(os.str());
  };
  std::size_t prev = idx(seq[0], 0);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const std::size_t cur = idx(seq[t], t);
    counts[prev][cur] += 1.0;
    prev = cur;
  }
  est.row_counts.assign(n, 0);
  est.chain.transition.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double tot = 0.0;
    for (double x : counts[i]) tot += x;
    est.row_counts[i] = static_cast<std::size_t>(tot);
    if (tot == 0.0) {
      est.chain.transition[i].assign(n, 1.0 / static_cast<double>(n));
      est.warnings.push_back("state " + std::to_string(states[i]) + " has no outgoing transitions; using a uniform row");
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) est.chain.transition[i][j] = counts[i][j] / tot;
  }
  return est;
}

struct QuantizedLags {
  std::vector<int> states;  // state set in slots
  std::vector<int> lags;    // one entry per raw lag, in slots
};

// Nearest state in seconds, ties toward the smaller lag, then converted to
// slots of length ts.
inline QuantizedLags quantize_lags(const std::vector<double>& raw_s, const std::vector<double>& states_s, double ts) {
  if (states_s.empty()) throw DomainError("quantize_lags: empty state set");
  if (!(ts > 0.0)) throw DomainError("quantize_lags: sampling period must be positive");
  std::vector<double> sorted = states_s;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] == sorted[i - 1]) throw DomainError("quantize_lags: duplicate state");
  QuantizedLags out;
  for (double s : sorted) {
    const long slots = std::lround(s / ts);
    if (slots < 1) throw DomainError("quantize_lags: state shorter than one slot");
    out.states.push_back(static_cast<int>(slots));
  }
  out.lags.reserve(raw_s.size());
  for (std::size_t i = 0; i < raw_s.size(); ++i) {
    const double r = raw_s[i];
    if (!(r > 0.0) || !std::isfinite(r)) {
      std::ostringstream os;
      os << "quantize_lags: raw lag #" << i << " = " << r << " is not positive";
      throw DataError(os.str());
    }
    std::size_t best = 0;
    double bd = std::abs(r - sorted[0]);
    for (std::size_t j = 1; j < sorted.size(); ++j) {
      const double d = std::abs(r - sorted[j]);
      if (d < bd - 1e-12) {
        bd = d;
        best = j;
      }
    }
    out.lags.push_back(out.states[best]);
  }
  return out;
}

// One step of the chain from state index i.
inline std::size_t chain_step(const LagChain& c, std::size_t i, Rng& rng) {
  const double u = draw_unit(rng);
  double acc = 0.0;
  const auto& row = c.transition[i];
  for (std::size_t j = 0; j < row.size(); ++j) {
    acc += row[j];
    if (u < acc) return j;
  }
  return row.size() - 1;
}

inline std::size_t draw_index(const std::vector<double>& dist, Rng& rng) {
  const double u = draw_unit(rng);
  double acc = 0.0;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    acc += dist[j];
    if (u < acc) return j;
  }
  return dist.size() - 1;
}

inline std::vector<int> simulate_chain(const LagChain& c, std::size_t n, Rng& rng) {
  const auto v = stationary(c);
  std::vector<int> out;
  out.reserve(n);
  std::size_t i = draw_index(v, rng);
  for (std::size_t t = 0; t < n; ++t) {
    out.push_back(c.states[i]);
    i = chain_step(c, i, rng);
  }
  return out;
}

}  // namespace whmc
