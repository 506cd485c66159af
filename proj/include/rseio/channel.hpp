#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "rseio/errors.hpp"
#include "rseio/rng.hpp"

namespace rseio {

/// Packet-arrival process for the measurement link: either i.i.d. Bernoulli
/// arrivals or a two-state Markov chain over {received = 1, dropped = 0}.
struct DropoutModel {
  enum class Kind { bernoulli, markov };

  Kind kind = Kind::bernoulli;
  double gamma_bar = 1.0;   // Bernoulli arrival probability
  double alpha = 0.0;       // Markov P(1 -> 1)
  double beta = 0.0;        // Markov P(0 -> 0)
  double gamma0_bar = 0.0;  // Markov P(first hidden state = 1)

  static DropoutModel bernoulli(double gamma) {
    DropoutModel m;
    m.kind = Kind::bernoulli;
    m.gamma_bar = gamma;
    m.validate();
    return m;
  }

  static DropoutModel markov(double alpha, double beta, double gamma0) {
    DropoutModel m;
    m.kind = Kind::markov;
    m.alpha = alpha;
    m.beta = beta;
    m.gamma0_bar = gamma0;
    m.validate();
    return m;
  }

  void validate() const {
    if (kind == Kind::bernoulli) {
      if (!(gamma_bar >= 0.0 && gamma_bar <= 1.0)) {
        throw ConfigError("bernoulli arrival probability must lie in [0, 1]");
      }
      return;
    }
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
      throw ConfigError("markov transition probabilities alpha and beta must lie in (0, 1)");
    }
    if (!(gamma0_bar >= 0.0 && gamma0_bar <= 1.0)) {
      throw ConfigError("markov initial arrival probability must lie in [0, 1]");
    }
  }
};

/// Finite realization of the arrival indicators gamma_1 .. gamma_N.
struct ArrivalSequence {
  std::vector<int> bits;

  int length() const { return static_cast<int>(bits.size()); }

  int sum() const {
    int s = 0;
    for (int b : bits) s += b;
    return s;
  }

  /// Integer encoding m = sum_i 2^{i-1} bits[i-1]; stable across runs so
  /// sequences can be named in tables.
  std::uint64_t index() const {
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i]) m |= (std::uint64_t{1} << i);
    }
    return m;
  }

  static ArrivalSequence from_index(std::uint64_t m, int n) {
    ArrivalSequence seq;
    seq.bits.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) seq.bits[static_cast<std::size_t>(i)] = (m >> i) & 1u;
    return seq;
  }
};

/// Draws gamma_1 .. gamma_N. For the Markov chain the hidden initial state is
/// drawn with P(1) = gamma0_bar and not emitted.
inline ArrivalSequence sample_sequence(const DropoutModel& model, int n, std::uint64_t rng_seed) {
  if (n < 1) throw ConfigError("sample_sequence: length must be >= 1");
  model.validate();
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ArrivalSequence seq;
  seq.bits.resize(static_cast<std::size_t>(n));
  if (model.kind == DropoutModel::Kind::bernoulli) {
    for (int i = 0; i < n; ++i) seq.bits[static_cast<std::size_t>(i)] = u(rng) < model.gamma_bar ? 1 : 0;
    return seq;
  }
  int state = u(rng) < model.gamma0_bar ? 1 : 0;
  for (int i = 0; i < n; ++i) {
    const double stay = state == 1 ? model.alpha : model.beta;
    const bool stays = u(rng) < stay;
    state = stays ? state : 1 - state;
    seq.bits[static_cast<std::size_t>(i)] = state;
  }
  return seq;
}

/// Exact log-probability of a finite arrival sequence. Bernoulli sequences
/// with an impossible factor return -infinity. The Markov form is the closed
/// expression obtained by expanding the chain factor by factor, including the
/// marginalized initial term; it requires alpha, beta strictly inside (0, 1).
inline double log_sequence_probability(const DropoutModel& model, const ArrivalSequence& seq) {
  if (seq.bits.empty()) throw ConfigError("log_sequence_probability: empty sequence");
  model.validate();
  const int n = seq.length();
  if (model.kind == DropoutModel::Kind::bernoulli) {
    const int ones = seq.sum();
    const int zeros = n - ones;
    if (ones > 0 && model.gamma_bar == 0.0) return -std::numeric_limits<double>::infinity();
    if (zeros > 0 && model.gamma_bar == 1.0) return -std::numeric_limits<double>::infinity();
    double lp = 0.0;
    if (ones > 0) lp += static_cast<double>(ones) * std::log(model.gamma_bar);
    if (zeros > 0) lp += static_cast<double>(zeros) * std::log(1.0 - model.gamma_bar);
    return lp;
  }

  const double a = model.alpha, b = model.beta, g0 = model.gamma0_bar;
  double sum_head = 0.0;  // sum_{k=1}^{N-1} S(k)
  double sum_tail = 0.0;  // sum_{k=2}^{N}   S(k)
  double sum_pair = 0.0;  // sum_{k=2}^{N}   S(k) S(k-1)
  for (int k = 1; k <= n; ++k) {
    const int bit = seq.bits[static_cast<std::size_t>(k - 1)];
    if (k <= n - 1) sum_head += bit;
    if (k >= 2) {
      sum_tail += bit;
      sum_pair += bit * seq.bits[static_cast<std::size_t>(k - 2)];
    }
  }
  const int s1 = seq.bits[0];
  const double initial = s1 + (1 - 2 * s1) * (b + g0 * (1.0 - a - b));
  if (initial <= 0.0) return -std::numeric_limits<double>::infinity();
  return static_cast<double>(n - 1) * std::log(b) + sum_head * std::log((1.0 - a) / b) +
         sum_tail * std::log(1.0 / b - 1.0) +
         sum_pair * std::log(a * b / ((1.0 - a) * (1.0 - b))) + std::log(initial);
}

}  // namespace rseio
