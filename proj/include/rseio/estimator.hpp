#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rseio/errors.hpp"
#include "rseio/linalg.hpp"
#include "rseio/plant.hpp"

namespace rseio {

/// Filter state after the measurement update at time t.
struct EstimatorState {
  int t = 0;
  Vector x_hat;  // state estimate
  Matrix p_mat;  // pseudo-covariance matrix (PCM)
};

/// Sensitivity-adjusted matrices entering the penalized update. With zero
/// penalty weight (or zero sensitivities) all four reduce to the nominal
/// (P, Q, B, A).
struct AdjustedMatrices {
  Matrix p_hat;
  Matrix q_hat;
  Matrix b_hat;
  Matrix a_hat;
};

/// Adjusted matrices for the update from time t, given the current PCM.
inline AdjustedMatrices adjust_matrices(const PlantModel& model, const Matrix& p, int t) {
  const PlantStage& st = model.stage(t);
  const double lambda = model.lambda_at(t);
  const SensitivityPair sens = sensitivity_matrices(model, t);
  const Matrix& s = sens.s_mat;
  const Matrix& tm = sens.t_mat;

  if (lambda == 0.0 || s.rows() == 0 || (s.isZero(0.0) && tm.isZero(0.0))) {
    return {p, st.q, st.b, st.a};
  }

  const Matrix p_inv = spd_inverse(p, "P");
  const Matrix q_inv = spd_inverse(st.q, "Q");
  const Matrix m1 =
      symmetrize(Matrix::Identity(s.rows(), s.rows()) + lambda * s * p * s.transpose());
  const Matrix q_hat =
      symmetrize(spd_inverse(q_inv + lambda * tm.transpose() * spd_solve(m1, tm, "I + lambda S P S^T"),
                             "adjusted process-noise information matrix"));
  const Matrix p_hat = symmetrize(
      spd_inverse(p_inv + lambda * s.transpose() * s, "adjusted state information matrix"));
  const Matrix b_hat = st.b - lambda * st.a * p_hat * s.transpose() * tm;
  const Matrix a_hat = (st.a - lambda * b_hat * q_hat * tm.transpose() * s) *
                       (Matrix::Identity(model.n, model.n) - lambda * p_hat * s.transpose() * s);
  return {p_hat, q_hat, b_hat, a_hat};
}

inline AdjustedMatrices adjust_matrices(const PlantModel& model, const EstimatorState& state, int t) {
  return adjust_matrices(model, state.p_mat, t);
}

/// {pred^{-1} + C^T R^{-1} C}^{-1} assembled literally in information form.
inline Matrix information_update_direct(const Matrix& pred, const Matrix& c, const Matrix& r) {
  const Matrix info = spd_inverse(pred, "predicted PCM") + c.transpose() * spd_solve(r, c, "R");
  return symmetrize(spd_inverse(info, "posterior information matrix"));
}

/// Same quantity through the rank-reducing inversion identity:
/// pred - pred C^T (R + C pred C^T)^{-1} C pred.
inline Matrix information_update_woodbury(const Matrix& pred, const Matrix& c, const Matrix& r) {
  const Matrix innov_cov = symmetrize(r + c * pred * c.transpose());
  return symmetrize(pred - pred * c.transpose() *
                               spd_solve(innov_cov, Matrix(c * pred), "innovation covariance"));
}

/// Picks the identity-based path when the output dimension is below the
/// state dimension (better conditioned there) and the direct information
/// form otherwise. Both paths agree to roundoff.
inline Matrix information_update(const Matrix& pred, const Matrix& c, const Matrix& r) {
  return c.rows() < c.cols() ? information_update_woodbury(pred, c, r)
                             : information_update_direct(pred, c, r);
}

/// Time-update-only PCM propagation (no measurement at t+1):
/// A P A^T + B Q B^T.
inline Matrix pcm_step_predict(const PlantModel& model, const Matrix& p, int t) {
  const PlantStage& st = model.stage(t);
  return symmetrize(st.a * p * st.a.transpose() + st.b * st.q * st.b.transpose());
}

/// Measurement-update PCM step through the sensitivity-adjusted matrices:
/// {[A Phat A^T + Bhat Qhat Bhat^T]^{-1} + C^T R^{-1} C}^{-1}.
inline Matrix pcm_step_adjusted(const PlantModel& model, const Matrix& p, int t) {
  const PlantStage& st = model.stage(t);
  const PlantStage& next = model.lti() ? st : model.stage(t + 1);
  const AdjustedMatrices adj = adjust_matrices(model, p, t);
  const Matrix pred = symmetrize(st.a * adj.p_hat * st.a.transpose() +
                                 adj.b_hat * adj.q_hat * adj.b_hat.transpose());
  return information_update(pred, next.c, next.r);
}

/// One step of the sensitivity-penalized estimator from time t to t+1.
/// gamma = 0: pure propagation through the nominal dynamics. gamma = 1:
/// penalized update consuming the received measurement y.
inline EstimatorState rseio_step(const PlantModel& model, const EstimatorState& state,
                                 const std::optional<Vector>& y, int gamma, int t) {
  if (gamma != 0 && gamma != 1) throw UsageError("rseio_step: gamma must be 0 or 1");
  if (gamma == 1 && !y.has_value()) throw UsageError("rseio_step: measurement required when gamma = 1");
  if (gamma == 0 && y.has_value()) throw UsageError("rseio_step: no measurement expected when gamma = 0");

  const PlantStage& st = model.stage(t);
  EstimatorState next;
  next.t = t + 1;
  if (gamma == 0) {
    next.x_hat = st.a * state.x_hat;
    next.p_mat = pcm_step_predict(model, state.p_mat, t);
    return next;
  }

  const PlantStage& st_next = model.lti() ? st : model.stage(t + 1);
  const AdjustedMatrices adj = adjust_matrices(model, state.p_mat, t);
  const Matrix pred = symmetrize(st.a * adj.p_hat * st.a.transpose() +
                                 adj.b_hat * adj.q_hat * adj.b_hat.transpose());
  next.p_mat = information_update(pred, st_next.c, st_next.r);
  const Vector innovation = *y - st_next.c * (adj.a_hat * state.x_hat);
  next.x_hat = adj.a_hat * state.x_hat +
               next.p_mat * st_next.c.transpose() * spd_solve(st_next.r, Matrix(innovation), "R");
  return next;
}

/// One step of the covariance-form Kalman recursion (Joseph-stabilized
/// update). gamma = 0 is pure prediction.
inline EstimatorState kalman_step(const PlantModel& model, const EstimatorState& state,
                                  const std::optional<Vector>& y, int gamma, int t) {
  if (gamma != 0 && gamma != 1) throw UsageError("kalman_step: gamma must be 0 or 1");
  if (gamma == 1 && !y.has_value()) throw UsageError("kalman_step: measurement required when gamma = 1");
  if (gamma == 0 && y.has_value()) throw UsageError("kalman_step: no measurement expected when gamma = 0");

  const PlantStage& st = model.stage(t);
  EstimatorState next;
  next.t = t + 1;
  const Vector x_pred = st.a * state.x_hat;
  const Matrix p_pred = pcm_step_predict(model, state.p_mat, t);
  if (gamma == 0) {
    next.x_hat = x_pred;
    next.p_mat = p_pred;
    return next;
  }

  const PlantStage& st_next = model.lti() ? st : model.stage(t + 1);
  const Matrix& c = st_next.c;
  const Matrix& r = st_next.r;
  const Matrix innov_cov = symmetrize(r + c * p_pred * c.transpose());
  const Matrix gain =
      spd_solve(innov_cov, Matrix(c * p_pred), "innovation covariance").transpose();
  const Matrix closed = Matrix::Identity(model.n, model.n) - gain * c;
  next.x_hat = x_pred + gain * (*y - c * x_pred);
  next.p_mat = symmetrize(closed * p_pred * closed.transpose() + gain * r * gain.transpose());
  return next;
}

/// Which recursion drives the filter and how arrival indicators are treated.
/// The *_ignore_gamma kinds feed every received signal into the measurement
/// update as if it were a true plant output.
enum class EstimatorKind { rseio, kfio, kf_ignore_gamma, rse_ignore_gamma };

inline const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::rseio: return "rseio";
    case EstimatorKind::kfio: return "kfio";
    case EstimatorKind::kf_ignore_gamma: return "kf_ignore_gamma";
    case EstimatorKind::rse_ignore_gamma: return "rse_ignore_gamma";
  }
  throw UsageError("unknown estimator kind");
}

inline EstimatorKind estimator_kind_from_name(const std::string& name) {
  if (name == "rseio") return EstimatorKind::rseio;
  if (name == "kfio") return EstimatorKind::kfio;
  if (name == "kf_ignore_gamma") return EstimatorKind::kf_ignore_gamma;
  if (name == "rse_ignore_gamma") return EstimatorKind::rse_ignore_gamma;
  throw ConfigError("unknown estimator kind '" + name + "'");
}

/// Runs a filter along a channel realization. gamma[i] and received[i]
/// describe time initial.t + i + 1; the returned trace holds the initial
/// state followed by one state per step.
inline std::vector<EstimatorState> run_filter(const PlantModel& model,
                                              const std::vector<int>& gamma,
                                              const std::vector<Vector>& received,
                                              EstimatorKind kind, const EstimatorState& initial) {
  if (gamma.size() != received.size()) {
    throw UsageError("run_filter: gamma and measurement sequences must align");
  }
  std::vector<EstimatorState> trace;
  trace.reserve(gamma.size() + 1);
  trace.push_back(initial);
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const int t = initial.t + static_cast<int>(i);
    const int g = gamma[i];
    if (g != 0 && g != 1) throw UsageError("run_filter: gamma entries must be 0 or 1");
    const EstimatorState& cur = trace.back();
    EstimatorState next;
    try {
      switch (kind) {
        case EstimatorKind::rseio:
          next = g ? rseio_step(model, cur, received[i], 1, t) : rseio_step(model, cur, std::nullopt, 0, t);
          break;
        case EstimatorKind::kfio:
          next = g ? kalman_step(model, cur, received[i], 1, t) : kalman_step(model, cur, std::nullopt, 0, t);
          break;
        case EstimatorKind::kf_ignore_gamma:
          next = kalman_step(model, cur, received[i], 1, t);
          break;
        case EstimatorKind::rse_ignore_gamma:
          next = rseio_step(model, cur, received[i], 1, t);
          break;
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (filter step from t=" + std::to_string(t) + ")");
    }
    trace.push_back(std::move(next));
  }
  return trace;
}

}  // namespace rseio
