#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rseio/errors.hpp"
#include "rseio/linalg.hpp"
#include "rseio/rng.hpp"

namespace rseio {

/// One time slice of the system description: nominal matrices at zero
/// parametric error, their per-component error Jacobians, and the noise
/// covariances.
struct PlantStage {
  Matrix a;  // n x n state transition at zero error
  Matrix b;  // n x m noise input at zero error
  Matrix c;  // p x n output map at zero error
  Matrix q;  // m x m process noise covariance
  Matrix r;  // p x p measurement noise covariance
  std::vector<Matrix> da;  // dA/d eps_k, k = 1..n_e
  std::vector<Matrix> db;  // dB/d eps_k
  std::vector<Matrix> dc;  // dC/d eps_k
};

/// Linear system with structured parametric uncertainty. A single stage
/// describes a time-invariant plant; a table of stages describes a
/// time-varying one (indexed by t, valid for t < stages.size()).
struct PlantModel {
  int n = 0;    // state dimension
  int m = 0;    // process-noise dimension
  int p = 0;    // output dimension
  int n_e = 0;  // parametric-error dimension

  std::vector<PlantStage> stages;  // size 1 => time-invariant
  std::vector<double> mu;          // design parameter schedule, size 1 => constant

  Vector x0_mean;
  Matrix p0;

  bool lti() const { return stages.size() == 1 && mu.size() == 1; }

  const PlantStage& stage(int t) const {
    if (stages.size() == 1) return stages.front();
    if (t < 0 || static_cast<std::size_t>(t) >= stages.size()) {
      throw ConfigError("plant stage index " + std::to_string(t) + " outside the tabulated schedule");
    }
    return stages[static_cast<std::size_t>(t)];
  }

  double mu_at(int t) const {
    if (mu.size() == 1) return mu.front();
    if (t < 0 || static_cast<std::size_t>(t) >= mu.size()) {
      throw ConfigError("design parameter index " + std::to_string(t) + " outside the tabulated schedule");
    }
    return mu[static_cast<std::size_t>(t)];
  }

  /// lambda_t = (1 - mu_t) / mu_t.
  double lambda_at(int t) const { return (1.0 - mu_at(t)) / mu_at(t); }

  /// Re-symmetrizes covariances in place, then checks every dimensional and
  /// definiteness invariant. Throws ConfigError / NumericError on violation.
  void normalize_and_validate() {
    if (n <= 0 || m <= 0 || p <= 0 || n_e < 0) {
      throw ConfigError("plant dimensions must satisfy n, m, p >= 1 and n_e >= 0");
    }
    if (stages.empty()) throw ConfigError("plant needs at least one stage");
    if (mu.empty()) throw ConfigError("plant needs a design parameter schedule");
    for (double m_t : mu) {
      if (!(m_t > 0.0) || m_t > 1.0) {
        throw ConfigError("design parameter mu must lie in (0, 1]");
      }
    }
    for (std::size_t idx = 0; idx < stages.size(); ++idx) {
      PlantStage& st = stages[idx];
      const std::string where = " at stage " + std::to_string(idx);
      auto check_dims = [&](const Matrix& mat, int r, int c, const char* name) {
        if (mat.rows() != r || mat.cols() != c) {
          throw ConfigError(std::string("matrix '") + name + "' has wrong dimensions" + where);
        }
      };
      check_dims(st.a, n, n, "A");
      check_dims(st.b, n, m, "B");
      check_dims(st.c, p, n, "C");
      check_dims(st.q, m, m, "Q");
      check_dims(st.r, p, p, "R");
      if (static_cast<int>(st.da.size()) != n_e || static_cast<int>(st.db.size()) != n_e ||
          static_cast<int>(st.dc.size()) != n_e) {
        throw ConfigError("jacobian block count must equal n_e" + where);
      }
      for (int k = 0; k < n_e; ++k) {
        check_dims(st.da[static_cast<std::size_t>(k)], n, n, "dA");
        check_dims(st.db[static_cast<std::size_t>(k)], n, m, "dB");
        check_dims(st.dc[static_cast<std::size_t>(k)], p, n, "dC");
      }
      st.q = symmetrize(st.q);
      st.r = symmetrize(st.r);
      require_positive_definite(st.q, "Q" + where);
      require_positive_definite(st.r, "R" + where);
    }
    if (x0_mean.size() != n) throw ConfigError("x0_mean must have length n");
    if (p0.rows() != n || p0.cols() != n) throw ConfigError("P0 must be n x n");
    p0 = symmetrize(p0);
    require_positive_definite(p0, "P0");
  }
};

/// Stacked first-order sensitivity matrices of the innovation with respect to
/// the parametric errors: for each error component k the stack holds
/// C_{t+1}(0) dA_t/d eps_k followed by dC_{t+1}/d eps_k A_t(0) (and the same
/// pattern with B for the second matrix). 2 * n_e * p rows each.
struct SensitivityPair {
  Matrix s_mat;  // (2 n_e p) x n
  Matrix t_mat;  // (2 n_e p) x m
};

inline SensitivityPair sensitivity_matrices(const PlantModel& model, int t) {
  const PlantStage& now = model.stage(t);
  const PlantStage& next = model.lti() ? now : model.stage(t + 1);
  const int rows = 2 * model.n_e * model.p;
  SensitivityPair out;
  out.s_mat = Matrix::Zero(rows, model.n);
  out.t_mat = Matrix::Zero(rows, model.m);
  for (int k = 0; k < model.n_e; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    out.s_mat.middleRows(2 * k * model.p, model.p) = next.c * now.da[ku];
    out.s_mat.middleRows((2 * k + 1) * model.p, model.p) = next.dc[ku] * now.a;
    out.t_mat.middleRows(2 * k * model.p, model.p) = next.c * now.db[ku];
    out.t_mat.middleRows((2 * k + 1) * model.p, model.p) = next.dc[ku] * now.b;
  }
  return out;
}

/// Sampler for the per-step parametric error vector; receives the step index.
using EpsSampler = std::function<Vector(std::mt19937_64&, int)>;

/// i.i.d. uniform error components on [-delta, delta].
inline EpsSampler uniform_eps_sampler(double delta, int n_e) {
  if (delta < 0.0) throw ConfigError("error magnitude bound delta must be >= 0");
  return [delta, n_e](std::mt19937_64& rng, int) {
    Vector e(n_e);
    std::uniform_real_distribution<double> u(-delta, delta);
    for (int k = 0; k < n_e; ++k) e(k) = delta == 0.0 ? 0.0 : u(rng);
    return e;
  };
}

/// Ground-truth roll-out: states, pre-channel sensor signals, and every
/// random draw used to produce them. Index convention: x[t] for t = 0..T;
/// y[t], v[t], eps[t] valid for t >= 1 (y[0] unused); w[t] for t = 0..T-1.
struct TruthTrajectory {
  std::vector<Vector> x;
  std::vector<Vector> y;    // C_t(eps_t) x_t + v_t, before arrival gating
  std::vector<Vector> eps;  // eps[t] for t = 0..T
  std::vector<Vector> w;
  std::vector<Vector> v;
  std::uint64_t seed = 0;
};

namespace detail {

inline Vector gaussian_vector(const Matrix& chol_lower, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector z(chol_lower.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
  return chol_lower.triangularView<Eigen::Lower>() * z;
}

inline Matrix cholesky_lower(const Matrix& cov, const std::string& name) {
  Eigen::LLT<Matrix> llt(symmetrize(cov));
  if (llt.info() != Eigen::Success) {
    throw NumericError("covariance '" + name + "' is not positive definite");
  }
  return llt.matrixL();
}

}  // namespace detail

/// Simulates the perturbed dynamics x_{t+1} = A_t(eps_t) x_t + B_t(eps_t) w_t
/// over the given horizon, with the perturbed matrices affine in the error:
/// A(eps) = A + sum_k eps_k dA_k, likewise B and C. Deterministic per seed.
inline TruthTrajectory simulate_truth(const PlantModel& model, int horizon,
                                      const EpsSampler& eps_sampler, std::uint64_t rng_seed) {
  if (horizon < 1) throw ConfigError("simulate_truth: horizon must be >= 1");
  std::mt19937_64 rng(rng_seed);

  TruthTrajectory out;
  out.seed = rng_seed;
  out.x.resize(static_cast<std::size_t>(horizon) + 1);
  out.y.resize(static_cast<std::size_t>(horizon) + 1);
  out.eps.resize(static_cast<std::size_t>(horizon) + 1);
  out.w.resize(static_cast<std::size_t>(horizon));
  out.v.resize(static_cast<std::size_t>(horizon) + 1);

  auto perturbed = [&](const std::vector<Matrix>& jac, const Matrix& nominal, const Vector& e) {
    Matrix m = nominal;
    for (int k = 0; k < model.n_e; ++k) m += e(k) * jac[static_cast<std::size_t>(k)];
    return m;
  };

  const Matrix p0_chol = detail::cholesky_lower(model.p0, "P0");
  out.x[0] = model.x0_mean + detail::gaussian_vector(p0_chol, rng);
  out.eps[0] = eps_sampler(rng, 0);

  // Cache per-stage noise factors; a time-invariant plant computes each once.
  Matrix q_chol, r_chol;
  int q_stage = -1, r_stage = -1;
  auto q_factor = [&](int t) -> const Matrix& {
    const int idx = model.stages.size() == 1 ? 0 : t;
    if (idx != q_stage) {
      q_chol = detail::cholesky_lower(model.stage(t).q, "Q at t=" + std::to_string(t));
      q_stage = idx;
    }
    return q_chol;
  };
  auto r_factor = [&](int t) -> const Matrix& {
    const int idx = model.stages.size() == 1 ? 0 : t;
    if (idx != r_stage) {
      r_chol = detail::cholesky_lower(model.stage(t).r, "R at t=" + std::to_string(t));
      r_stage = idx;
    }
    return r_chol;
  };

  for (int t = 0; t < horizon; ++t) {
    const auto tu = static_cast<std::size_t>(t);
    const PlantStage& st = model.stage(t);
    out.w[tu] = detail::gaussian_vector(q_factor(t), rng);
    out.eps[tu + 1] = eps_sampler(rng, t + 1);
    out.v[tu + 1] = detail::gaussian_vector(r_factor(t + 1), rng);

    const Matrix a_eps = perturbed(st.da, st.a, out.eps[tu]);
    const Matrix b_eps = perturbed(st.db, st.b, out.eps[tu]);
    out.x[tu + 1] = a_eps * out.x[tu] + b_eps * out.w[tu];

    const PlantStage& st_next = model.stage(t + 1);
    const Matrix c_eps = perturbed(st_next.dc, st_next.c, out.eps[tu + 1]);
    out.y[tu + 1] = c_eps * out.x[tu + 1] + out.v[tu + 1];
  }
  return out;
}

/// Built-in benchmark plant: a two-state system with an uncertain
/// off-diagonal coupling entering through a rank-one Jacobian, unit noise
/// input, and a difference output. Shipped as the default preset.
inline PlantModel make_benchmark_plant(double mu = 0.8) {
  PlantModel model;
  model.n = 2;
  model.m = 2;
  model.p = 1;
  model.n_e = 1;

  PlantStage st;
  st.a = (Matrix(2, 2) << 0.9802, 0.0196, 0.0, 0.9802).finished();
  st.b = Matrix::Identity(2, 2);
  st.c = (Matrix(1, 2) << 1.0, -1.0).finished();
  st.q = (Matrix(2, 2) << 1.9608, 0.0195, 0.0195, 1.9605).finished();
  st.r = Matrix::Constant(1, 1, 1.0);
  st.da = {(Matrix(2, 2) << 0.0, 0.099, 0.0, 0.0).finished()};
  st.db = {Matrix::Zero(2, 2)};
  st.dc = {Matrix::Zero(1, 2)};
  model.stages = {std::move(st)};

  model.mu = {mu};
  model.x0_mean = (Vector(2) << 1.0, 0.0).finished();
  model.p0 = Matrix::Identity(2, 2);
  model.normalize_and_validate();
  return model;
}

}  // namespace rseio
