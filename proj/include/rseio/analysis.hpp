#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rseio/channel.hpp"
#include "rseio/errors.hpp"
#include "rseio/linalg.hpp"
#include "rseio/pcm.hpp"
#include "rseio/plant.hpp"
#include "rseio/rng.hpp"

namespace rseio {

/// Membership flags for the nested sets of structure-preserving blocks:
/// the base set (identity + sign conditions), the left/right strict cones,
/// and their intersection.
struct HamiltonianClass {
  bool in_h = false;
  bool in_hl = false;
  bool in_hr = false;
  bool in_hlr = false;
};

namespace detail {

inline double min_eigenvalue(const Matrix& sym) {
  if (sym.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed in classification");
  return es.eigenvalues().minCoeff();
}

inline bool psd_within(const Matrix& sym, double tol) {
  return min_eigenvalue(sym) >= -tol * std::max(1.0, sym.norm());
}

/// Strict positive definiteness at the documented relative threshold
/// (exact-arithmetic ">0" is replaced by a margin of 1e-9 times the norm).
inline bool strictly_pd(const Matrix& sym) {
  const double mn = min_eigenvalue(sym);
  return mn > 0.0 && mn > 1e-9 * sym.norm();
}

}  // namespace detail

/// Classifies one block matrix. in_h requires the structure identity within
/// tol, an invertible top-left block, and both sign products at least
/// positive semidefinite (within -tol relative slack); the strict classes
/// additionally need the corresponding product strictly positive definite.
inline HamiltonianClass classify_hamiltonian(const HamiltonianBlock& phi, double tol = 1e-9) {
  HamiltonianClass cls;
  const double resid = hamiltonian_residual(phi);
  if (resid > tol * std::max(1.0, phi.assemble().norm())) return cls;
  Eigen::PartialPivLU<Matrix> lu(phi.phi11);
  if (lu.rcond() < kRcondFloor) return cls;
  const Matrix m_r = symmetrize(phi.phi12 * phi.phi11.transpose());
  const Matrix m_l = symmetrize(phi.phi11.transpose() * phi.phi21);
  if (!detail::psd_within(m_r, tol) || !detail::psd_within(m_l, tol)) return cls;
  cls.in_h = true;
  cls.in_hl = detail::strictly_pd(m_l);
  cls.in_hr = detail::strictly_pd(m_r);
  cls.in_hlr = cls.in_hl && cls.in_hr;
  return cls;
}

/// Membership of the ordered product phis[0] * phis[1] * ... * phis.back()
/// (first element leftmost) evaluated WITHOUT forming the long product:
/// the strict classes are decided by positive definiteness of the two
/// accumulated Gram sums
///   G_l = sum_a R_a^T (Phi_a11^T Phi_a21) R_a,  R_a = product of the
///         top-left blocks to the right of position a,
///   G_r = sum_a L_a (Phi_a12 Phi_a11^T) L_a^T,  L_a = product of the
///         top-left blocks to the left of position a.
/// Inputs are expected to lie in the base set, whose closure under products
/// then carries over to the result.
inline HamiltonianClass product_membership(const std::vector<HamiltonianBlock>& phis) {
  HamiltonianClass cls;
  cls.in_h = true;
  if (phis.empty()) return cls;
  const Eigen::Index n = phis.front().dim();
  for (const auto& phi : phis) {
    Eigen::PartialPivLU<Matrix> lu(phi.phi11);
    if (lu.rcond() < kRcondFloor) {
      throw NumericError("product membership undefined: a top-left block is singular");
    }
  }
  Matrix g_l = Matrix::Zero(n, n);
  {
    Matrix racc = Matrix::Identity(n, n);
    for (std::size_t a = phis.size(); a-- > 0;) {
      const Matrix core = symmetrize(phis[a].phi11.transpose() * phis[a].phi21);
      g_l += racc.transpose() * core * racc;
      racc = phis[a].phi11 * racc;
    }
  }
  Matrix g_r = Matrix::Zero(n, n);
  {
    Matrix lacc = Matrix::Identity(n, n);
    for (std::size_t a = 0; a < phis.size(); ++a) {
      const Matrix core = symmetrize(phis[a].phi12 * phis[a].phi11.transpose());
      g_r += lacc * core * lacc.transpose();
      lacc = lacc * phis[a].phi11;
    }
  }
  cls.in_hl = detail::strictly_pd(symmetrize(g_l));
  cls.in_hr = detail::strictly_pd(symmetrize(g_r));
  cls.in_hlr = cls.in_hl && cls.in_hr;
  return cls;
}

/// Arrival instants t_1 < ... < t_p inside a window of n_total steps.
struct DropoutPattern {
  std::vector<int> t_indices;
  int n_total = 0;

  void validate() const {
    if (n_total < 1) throw ConfigError("dropout pattern needs a positive window length");
    int prev = 0;
    for (int t : t_indices) {
      if (t <= prev || t > n_total) {
        throw ConfigError("arrival instants must be strictly increasing within [1, N]");
      }
      prev = t;
    }
  }

  /// Full indicator sequence gamma_1..gamma_N for this pattern.
  std::vector<int> indicator() const {
    std::vector<int> bits(static_cast<std::size_t>(n_total), 0);
    for (int t : t_indices) bits[static_cast<std::size_t>(t - 1)] = 1;
    return bits;
  }
};

/// Time-invariant symbols for the structural tests: the update-step pair
/// (A1, H1) with its noise square root G1, and the propagation-step pair
/// (A2, G2).
struct LtiSymbols {
  Matrix a1, g1, h1;  // update step: Atilde, B Qtilde^{1/2}, Rtilde^{-1/2} Ctilde
  Matrix a2, g2;      // propagation step: A, B Q^{1/2}
};

inline LtiSymbols analysis_symbols(const PlantModel& model) {
  if (!model.lti()) throw ConfigError("structural analysis requires a time-invariant model");
  const PlantStage& st = model.stage(0);
  const TildeMatrices tld = tilde_matrices(model, 0);
  LtiSymbols sym;
  sym.a1 = tld.a_tilde;
  sym.g1 = st.b * symmetric_sqrt(tld.q_tilde, "Qtilde");
  sym.h1 = symmetric_inv_sqrt(tld.r_tilde, "Rtilde") * tld.c_tilde;
  sym.a2 = st.a;
  sym.g2 = st.b * symmetric_sqrt(st.q, "Q");
  return sym;
}

/// Stacked observability-style matrix for an arrival pattern: one block row
/// per arrival, H1 X_j with X_p = I and X_j = A1 (A2)^{t_{j+1}-t_j-1} X_{j+1}.
/// Full column rank is equivalent to the product over the pattern lying in
/// the strict left class.
inline Matrix observability_stack(const PlantModel& model, const DropoutPattern& pattern) {
  pattern.validate();
  const LtiSymbols sym = analysis_symbols(model);
  const int p = static_cast<int>(pattern.t_indices.size());
  const Eigen::Index block_rows = sym.h1.rows();
  Matrix out(block_rows * p, model.n);
  Matrix x = Matrix::Identity(model.n, model.n);
  Eigen::Index at = 0;
  for (int j = p; j >= 1; --j) {
    if (j < p) {
      const int gap = pattern.t_indices[static_cast<std::size_t>(j)] -
                      pattern.t_indices[static_cast<std::size_t>(j - 1)] - 1;
      x = sym.a1 * matrix_power(sym.a2, gap) * x;
    }
    out.middleRows(at, block_rows) = sym.h1 * x;
    at += block_rows;
  }
  return out;
}

/// Stacked controllability-style matrix for an arrival pattern: walking the
/// window left to right, each propagation step contributes V (A2)^r G2 and
/// each arrival contributes V (A2)^{gap} G1 before updating the prefix V.
/// Full row rank is equivalent to the product lying in the strict right
/// class.
inline Matrix controllability_stack(const PlantModel& model, const DropoutPattern& pattern) {
  pattern.validate();
  const LtiSymbols sym = analysis_symbols(model);
  std::vector<Matrix> blocks;
  Matrix v = Matrix::Identity(model.n, model.n);
  int prev = 0;
  for (int tj : pattern.t_indices) {
    const int gap = tj - prev - 1;
    for (int r = 0; r < gap; ++r) blocks.push_back(v * matrix_power(sym.a2, r) * sym.g2);
    blocks.push_back(v * matrix_power(sym.a2, gap) * sym.g1);
    v = v * matrix_power(sym.a2, gap) * sym.a1;
    prev = tj;
  }
  for (int r = 0; r < pattern.n_total - prev; ++r) {
    blocks.push_back(v * matrix_power(sym.a2, r) * sym.g2);
  }
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.cols();
  Matrix out(model.n, total);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

inline bool pair_observable(const Matrix& a, const Matrix& h) {
  const int n = static_cast<int>(a.rows());
  Matrix stack(h.rows() * n, a.cols());
  Matrix cur = h;
  for (int i = 0; i < n; ++i) {
    stack.middleRows(i * h.rows(), h.rows()) = cur;
    cur = cur * a;
  }
  return rank_full(stack, RankMode::column);
}

inline bool pair_controllable(const Matrix& a, const Matrix& g) {
  const int n = static_cast<int>(a.rows());
  Matrix stack(a.rows(), g.cols() * n);
  Matrix cur = g;
  for (int i = 0; i < n; ++i) {
    stack.middleCols(i * g.cols(), g.cols()) = cur;
    cur = a * cur;
  }
  return rank_full(stack, RankMode::row);
}

/// Which of the sufficient structural conditions hold, with the witnessing
/// powers m in [0, n-1]: observability of (A1 A2^m, H1) certifies reachable
/// membership in the strict left class; any of the three controllability
/// conditions certifies the strict right class.
struct MembershipConditionReport {
  std::vector<int> observability_witnesses;        // (A1 A2^m, H1) observable
  std::vector<int> controllability_witnesses_mixed;    // (A1 A2^m, G1) controllable
  bool base_pair_controllable = false;             // (A2, G2) controllable
  std::vector<int> controllability_witnesses_swapped;  // (A2^m A1, G2) controllable

  bool observability_holds() const { return !observability_witnesses.empty(); }
  bool controllability_holds() const {
    return base_pair_controllable || !controllability_witnesses_mixed.empty() ||
           !controllability_witnesses_swapped.empty();
  }
  bool both_hold() const { return observability_holds() && controllability_holds(); }
};

inline MembershipConditionReport sufficient_membership_conditions(const PlantModel& model) {
  const LtiSymbols sym = analysis_symbols(model);
  MembershipConditionReport report;
  for (int m = 0; m < model.n; ++m) {
    const Matrix a2m = matrix_power(sym.a2, m);
    if (pair_observable(sym.a1 * a2m, sym.h1)) report.observability_witnesses.push_back(m);
    if (pair_controllable(sym.a1 * a2m, sym.g1)) report.controllability_witnesses_mixed.push_back(m);
    if (pair_controllable(a2m * sym.a1, sym.g2)) report.controllability_witnesses_swapped.push_back(m);
  }
  report.base_pair_controllable = pair_controllable(sym.a2, sym.g2);
  return report;
}

/// Ratio statistics of the map P -> (composite PCM step over gamma_sequence)
/// sampled on random positive definite pairs in the geodesic metric.
struct ContractionStats {
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  double median_ratio = 0.0;
  double p90_ratio = 0.0;
  int samples = 0;
};

namespace detail {

/// Applies the composite PCM map for an arrival sequence (time order).
class SequenceMap {
 public:
  SequenceMap(const PlantModel& model, const std::vector<int>& gamma_sequence) {
    if (model.lti()) {
      const HamiltonianBlock phi0 = build_phi(model, 0, 0);
      const HamiltonianBlock phi1 = build_phi(model, 0, 1);
      steps_.reserve(gamma_sequence.size());
      for (int g : gamma_sequence) steps_.push_back(g ? phi1 : phi0);
    } else {
      for (std::size_t i = 0; i < gamma_sequence.size(); ++i) {
        steps_.push_back(build_phi(model, static_cast<int>(i), gamma_sequence[i]));
      }
    }
  }

  Matrix operator()(Matrix p) const {
    for (const auto& phi : steps_) p = homographic(phi, p);
    return p;
  }

 private:
  std::vector<HamiltonianBlock> steps_;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

inline ContractionStats estimate_contraction(const PlantModel& model,
                                             const std::vector<int>& gamma_sequence, int trials,
                                             std::uint64_t rng_seed) {
  if (trials < 1) throw ConfigError("estimate_contraction: trials must be >= 1");
  const detail::SequenceMap map(model, gamma_sequence);
  std::mt19937_64 rng(make_engine(rng_seed, 0x7261746955ULL));
  std::vector<double> ratios;
  ratios.reserve(static_cast<std::size_t>(trials));
  while (static_cast<int>(ratios.size()) < trials) {
    const Matrix p = random_pdm(model.n, rng);
    const Matrix q = random_pdm(model.n, rng);
    const double base = riemannian_distance(p, q);
    if (base < 1e-9) continue;
    ratios.push_back(riemannian_distance(map(p), map(q)) / base);
  }
  ContractionStats stats;
  stats.samples = trials;
  stats.max_ratio = *std::max_element(ratios.begin(), ratios.end());
  double acc = 0.0;
  for (double r : ratios) acc += r;
  stats.mean_ratio = acc / static_cast<double>(trials);
  std::sort(ratios.begin(), ratios.end());
  stats.median_ratio = detail::quantile_sorted(ratios, 0.5);
  stats.p90_ratio = detail::quantile_sorted(ratios, 0.9);
  return stats;
}

/// Monte Carlo estimate of E[log max-ratio] over channel-sampled arrival
/// sequences of length n_steps; the upper confidence bound sitting strictly
/// below zero is the numerical stationarity evidence.
struct LogLipschitzEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int sequences = 0;
  int pairs_per_sequence = 0;
};

inline LogLipschitzEstimate estimate_expected_log_lipschitz(const PlantModel& model,
                                                            const DropoutModel& channel, int n_steps,
                                                            int sequence_samples, int pair_samples,
                                                            std::uint64_t rng_seed) {
  if (n_steps < 1) throw ConfigError("estimate_expected_log_lipschitz: n_steps must be >= 1");
  if (sequence_samples < 2 || pair_samples < 1) {
    throw ConfigError("estimate_expected_log_lipschitz: need >= 2 sequence samples and >= 1 pair");
  }
  std::vector<double> logs;
  logs.reserve(static_cast<std::size_t>(sequence_samples));
  for (int i = 0; i < sequence_samples; ++i) {
    const ArrivalSequence seq =
        sample_sequence(channel, n_steps, derive_seed(rng_seed, 2 * static_cast<std::uint64_t>(i)));
    const detail::SequenceMap map(model, seq.bits);
    std::mt19937_64 rng(derive_seed(rng_seed, 2 * static_cast<std::uint64_t>(i) + 1));
    double max_ratio = 0.0;
    int have = 0;
    while (have < pair_samples) {
      const Matrix p = random_pdm(model.n, rng);
      const Matrix q = random_pdm(model.n, rng);
      const double base = riemannian_distance(p, q);
      if (base < 1e-9) continue;
      max_ratio = std::max(max_ratio, riemannian_distance(map(p), map(q)) / base);
      ++have;
    }
    logs.push_back(std::log(max_ratio));
  }
  LogLipschitzEstimate out;
  out.sequences = sequence_samples;
  out.pairs_per_sequence = pair_samples;
  double mean = 0.0;
  for (double l : logs) mean += l;
  mean /= static_cast<double>(logs.size());
  double var = 0.0;
  for (double l : logs) var += (l - mean) * (l - mean);
  var /= static_cast<double>(logs.size() - 1);
  out.estimate = mean;
  out.std_error = std::sqrt(var / static_cast<double>(logs.size()));
  out.ci_low = mean - 1.96 * out.std_error;
  out.ci_high = mean + 1.96 * out.std_error;
  return out;
}

}  // namespace rseio
