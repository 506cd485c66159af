#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "rseio/channel.hpp"
#include "rseio/errors.hpp"
#include "rseio/estimator.hpp"
#include "rseio/linalg.hpp"
#include "rseio/pcm.hpp"
#include "rseio/plant.hpp"
#include "rseio/rng.hpp"

namespace rseio {

/// Runs fn(i) for i in [0, count) on up to `threads` workers (0 picks the
/// hardware count). Work items are claimed from an atomic counter; the first
/// exception is rethrown on the caller after all workers join.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (count <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = std::min(workers, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (!failed.load(std::memory_order_relaxed)) {
        const int i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Full experiment description: plant + channel + disturbance radius,
/// which estimators to race, and which initial PCMs to study.
struct SimConfig {
  PlantModel plant;
  DropoutModel channel = DropoutModel::bernoulli(1.0);
  double delta = 0.0;
  int horizon = 500;
  int trials = 500;
  std::vector<EstimatorKind> estimators;
  std::vector<Matrix> p0_list;  // initial PCMs for the forgetting study
  std::uint64_t seed = 1;
  int threads = 0;
  std::string label;

  void validate() {
    plant.normalize_and_validate();
    channel.validate();
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (delta < 0.0) throw ConfigError("delta must be >= 0");
    for (auto& p0 : p0_list) {
      p0 = symmetrize(p0);
      require_positive_definite(p0, "study P0");
    }
  }
};

/// Final-time PCM samples for one initial PCM: samples[k][j] is
/// upper-triangle element k of trial j's end-of-window matrix.
struct PcmStudy {
  Matrix p0;
  std::vector<std::vector<double>> samples;
};

struct EpdfCurve {
  std::vector<double> grid;
  std::vector<double> density;
};

struct SimReport {
  std::string label;
  std::uint64_t master_seed = 0;
  std::string config_hash;
  int horizon = 0;
  int trials = 0;
  std::vector<std::string> estimator_names;
  std::vector<std::vector<double>> mse;  // [estimator][t], t = 0..horizon
  std::vector<int> excluded_trials;
  std::vector<std::string> element_labels;  // "P11", "P12", ... (upper triangle)
  std::vector<PcmStudy> pcm_studies;
  std::vector<Matrix> ks_matrices;  // per element: pairwise KS across initial PCMs
};

/// Per-time mean of squared estimation-error norms; sq[j][t] holds trial j's
/// squared error at time t and `included` masks the trials that survived.
inline std::vector<double> empirical_mse(const std::vector<std::vector<double>>& sq,
                                         const std::vector<char>& included) {
  std::size_t count = 0;
  std::size_t horizon_pts = 0;
  for (std::size_t j = 0; j < sq.size(); ++j) {
    if (included[j]) {
      ++count;
      horizon_pts = sq[j].size();
    }
  }
  if (count == 0) throw NumericError("no trials survived for the error average");
  std::vector<double> out(horizon_pts, 0.0);
  for (std::size_t j = 0; j < sq.size(); ++j) {
    if (!included[j]) continue;
    for (std::size_t t = 0; t < horizon_pts; ++t) out[t] += sq[j][t];
  }
  for (double& v : out) v /= static_cast<double>(count);
  return out;
}

namespace detail {

inline double percentile(const std::vector<double>& sorted, double p) {
  const double n = static_cast<double>(sorted.size());
  const double rank = p / 100.0 * n - 0.5;
  if (rank <= 0.0) return sorted.front();
  if (rank >= n - 1.0) return sorted.back();
  const std::size_t lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

/// Gaussian-kernel bandwidth: 0.9 min(sd, IQR/1.34) n^{-1/5}. Degenerate
/// (constant) samples have no usable bandwidth and raise NumericError.
inline double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.size() < 2) throw NumericError("bandwidth needs at least two samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= (n - 1.0);
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double iqr = detail::percentile(sorted, 75.0) - detail::percentile(sorted, 25.0);
  double spread = std::sqrt(var);
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(n, -0.2);
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw NumericError("degenerate sample set: kernel bandwidth is not positive");
  }
  return h;
}

inline std::vector<double> epdf(const std::vector<double>& samples, const std::vector<double>& grid,
                                double bandwidth) {
  if (samples.empty()) throw NumericError("empirical density needs samples");
  if (!(bandwidth > 0.0)) throw NumericError("kernel bandwidth must be positive");
  const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * M_PI));
  std::vector<double> density(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double acc = 0.0;
    for (double s : samples) {
      const double z = (grid[i] - s) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    density[i] = acc * norm;
  }
  return density;
}

/// Curve on a 100-point grid spanning [min - 3h, max + 3h].
inline EpdfCurve default_epdf(const std::vector<double>& samples) {
  const double h = silverman_bandwidth(samples);
  const auto [mn_it, mx_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn_it - 3.0 * h;
  const double hi = *mx_it + 3.0 * h;
  EpdfCurve curve;
  curve.grid.resize(100);
  for (int i = 0; i < 100; ++i) {
    curve.grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / 99.0;
  }
  curve.density = epdf(samples, curve.grid, h);
  return curve;
}

/// Exact two-sample Kolmogorov-Smirnov statistic via a sorted merge.
inline double stationarity_metric(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw NumericError("KS statistic needs nonempty samples");
  std::vector<double> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t ia = 0, ib = 0;
  double d = 0.0;
  while (ia < sa.size() && ib < sb.size()) {
    const double x = std::min(sa[ia], sb[ib]);
    while (ia < sa.size() && sa[ia] <= x) ++ia;
    while (ib < sb.size() && sb[ib] <= x) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
  }
  return d;
}

namespace detail {

/// Precomputed time-invariant PCM step pieces for the forgetting study.
struct LtiPcmStepper {
  Matrix a, bqbt;              // propagation: A P A^T + B Q B^T
  Matrix a_tilde, bqtbt;       // update: information step on Atilde P Atilde^T + B Qtilde B^T
  Matrix c_tilde, r_tilde;
  bool lti = false;

  static LtiPcmStepper build(const PlantModel& model) {
    LtiPcmStepper s;
    s.lti = model.lti();
    if (s.lti) {
      const PlantStage& st = model.stage(0);
      const TildeMatrices tld = tilde_matrices(model, 0);
      s.a = st.a;
      s.bqbt = symmetrize(st.b * st.q * st.b.transpose());
      s.a_tilde = tld.a_tilde;
      s.bqtbt = symmetrize(st.b * tld.q_tilde * st.b.transpose());
      s.c_tilde = tld.c_tilde;
      s.r_tilde = tld.r_tilde;
    }
    return s;
  }

  Matrix step(const PlantModel& model, const Matrix& p, int gamma, int t) const {
    if (!lti) return gamma ? pcm_step_tilde(model, p, t) : pcm_step_predict(model, p, t);
    if (!gamma) return symmetrize(a * p * a.transpose() + bqbt);
    const Matrix pred = symmetrize(a_tilde * p * a_tilde.transpose() + bqtbt);
    return information_update(pred, c_tilde, r_tilde);
  }
};

}  // namespace detail

/// Runs the configured experiment: races the requested estimators over
/// shared disturbance/arrival realizations (trial j is reproducible from the
/// master seed alone, independent of thread count), and runs the
/// initial-PCM forgetting study over independent arrival streams. Trials
/// that abort with a numeric failure are excluded and recorded.
inline SimReport run_experiment(SimConfig config) {
  config.validate();
  const int horizon = config.horizon;
  const int trials = config.trials;
  SimReport report;
  report.label = config.label;
  report.master_seed = config.seed;
  report.horizon = horizon;
  report.trials = trials;

  if (!config.estimators.empty()) {
    const std::size_t n_est = config.estimators.size();
    for (EstimatorKind kind : config.estimators) report.estimator_names.push_back(estimator_name(kind));
    // sq[e][j][t]: filled by trial index, reduced in trial order afterwards
    std::vector<std::vector<std::vector<double>>> sq(
        n_est, std::vector<std::vector<double>>(static_cast<std::size_t>(trials)));
    std::vector<char> included(static_cast<std::size_t>(trials), 1);
    const EpsSampler eps = uniform_eps_sampler(config.delta, config.plant.n_e);
    parallel_for(trials, config.threads, [&](int j) {
      const std::uint64_t truth_seed = derive_seed(config.seed, 8ULL * static_cast<std::uint64_t>(j));
      const std::uint64_t chan_seed =
          derive_seed(config.seed, 8ULL * static_cast<std::uint64_t>(j) + 1ULL);
      const TruthTrajectory truth = simulate_truth(config.plant, horizon, eps, truth_seed);
      const ArrivalSequence gamma = sample_sequence(config.channel, horizon, chan_seed);
      std::vector<Vector> received(static_cast<std::size_t>(horizon));
      for (int t = 1; t <= horizon; ++t) {
        received[static_cast<std::size_t>(t - 1)] =
            gamma.bits[static_cast<std::size_t>(t - 1)] ? truth.y[static_cast<std::size_t>(t)]
                                                        : truth.v[static_cast<std::size_t>(t)];
      }
      EstimatorState initial;
      initial.t = 0;
      initial.x_hat = config.plant.x0_mean;
      initial.p_mat = config.plant.p0;
      try {
        for (std::size_t e = 0; e < n_est; ++e) {
          const auto states =
              run_filter(config.plant, gamma.bits, received, config.estimators[e], initial);
          auto& row = sq[e][static_cast<std::size_t>(j)];
          row.resize(static_cast<std::size_t>(horizon) + 1);
          for (int t = 0; t <= horizon; ++t) {
            const Vector err = truth.x[static_cast<std::size_t>(t)] -
                               states[static_cast<std::size_t>(t)].x_hat;
            row[static_cast<std::size_t>(t)] = err.squaredNorm();
          }
        }
      } catch (const NumericError&) {
        included[static_cast<std::size_t>(j)] = 0;
      }
    });
    for (int j = 0; j < trials; ++j) {
      if (!included[static_cast<std::size_t>(j)]) report.excluded_trials.push_back(j);
    }
    for (std::size_t e = 0; e < n_est; ++e) report.mse.push_back(empirical_mse(sq[e], included));
  }

  if (!config.p0_list.empty()) {
    const int n = config.plant.n;
    for (int r = 0; r < n; ++r) {
      for (int c = r; c < n; ++c) {
        report.element_labels.push_back("P" + std::to_string(r + 1) + std::to_string(c + 1));
      }
    }
    const std::size_t n_elem = report.element_labels.size();
    const auto stepper = detail::LtiPcmStepper::build(config.plant);
    for (std::size_t i = 0; i < config.p0_list.size(); ++i) {
      PcmStudy study;
      study.p0 = config.p0_list[i];
      study.samples.assign(n_elem, std::vector<double>(static_cast<std::size_t>(trials), 0.0));
      parallel_for(trials, config.threads, [&](int j) {
        const std::uint64_t stream =
            0x100000ULL * (static_cast<std::uint64_t>(i) + 2ULL) + static_cast<std::uint64_t>(j);
        const ArrivalSequence gamma =
            sample_sequence(config.channel, horizon, derive_seed(config.seed, stream));
        Matrix p = study.p0;
        for (int t = 0; t < horizon; ++t) {
          p = stepper.step(config.plant, p, gamma.bits[static_cast<std::size_t>(t)], t);
        }
        std::size_t k = 0;
        for (int r = 0; r < n; ++r) {
          for (int c = r; c < n; ++c) study.samples[k++][static_cast<std::size_t>(j)] = p(r, c);
        }
      });
      report.pcm_studies.push_back(std::move(study));
    }
    for (std::size_t k = 0; k < n_elem; ++k) {
      Matrix ks = Matrix::Zero(static_cast<Eigen::Index>(config.p0_list.size()),
                               static_cast<Eigen::Index>(config.p0_list.size()));
      for (std::size_t i = 0; i < config.p0_list.size(); ++i) {
        for (std::size_t j2 = i + 1; j2 < config.p0_list.size(); ++j2) {
          const double d = stationarity_metric(report.pcm_studies[i].samples[k],
                                               report.pcm_studies[j2].samples[k]);
          ks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j2)) = d;
          ks(static_cast<Eigen::Index>(j2), static_cast<Eigen::Index>(i)) = d;
        }
      }
      report.ks_matrices.push_back(std::move(ks));
    }
  }
  return report;
}

}  // namespace rseio
