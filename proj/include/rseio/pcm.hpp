#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rseio/errors.hpp"
#include "rseio/estimator.hpp"
#include "rseio/linalg.hpp"
#include "rseio/plant.hpp"

namespace rseio {

/// Constant-in-P reformulation of the penalized PCM update. Unlike the
/// adjusted matrices (which depend on the current PCM), these depend only on
/// the model at time t, which is what makes product-form analysis possible.
struct TildeMatrices {
  Matrix a_check;  // A - lambda B Qcheck T^T S; must be invertible
  Matrix q_check;  // (Q^{-1} + lambda T^T T)^{-1}
  Matrix s_tilde;  // sqrt(lambda) (I + lambda T Q T^T)^{-1/2} S
  Matrix a_tilde;  // Acheck + B Qcheck Btilde^T Stilde^T Stilde
  Matrix b_tilde;  // Acheck^{-1} B
  Matrix q_tilde;  // Qcheck + Qcheck Btilde^T Stilde^T Stilde Btilde Qcheck
  Matrix c_tilde;  // col{ Stilde Acheck^{-1}, C }
  Matrix r_tilde;  // blkdiag( I + Stilde Btilde Qcheck Btilde^T Stilde^T, R )
};

inline TildeMatrices tilde_matrices(const PlantModel& model, int t) {
  const PlantStage& st = model.stage(t);
  const PlantStage& next = model.lti() ? st : model.stage(t + 1);
  const double lambda = model.lambda_at(t);
  const SensitivityPair sens = sensitivity_matrices(model, t);
  const Matrix& s = sens.s_mat;
  const Matrix& tm = sens.t_mat;
  const Eigen::Index srows = s.rows();

  TildeMatrices out;
  out.q_check = symmetrize(spd_inverse(
      spd_inverse(st.q, "Q") + lambda * tm.transpose() * tm, "checked process-noise information matrix"));
  out.a_check = st.a - lambda * st.b * out.q_check * tm.transpose() * s;
  if (condition_number(out.a_check) > 1e12) {
    throw NumericError("matrix 'Acheck' is singular or too ill-conditioned; product form unavailable");
  }
  const Matrix w = symmetrize(Matrix::Identity(srows, srows) + lambda * tm * st.q * tm.transpose());
  out.s_tilde = std::sqrt(lambda) * symmetric_inv_sqrt(w, "I + lambda T Q T^T") * s;
  const Matrix a_check_inv = general_inverse(out.a_check, "Acheck");
  out.b_tilde = a_check_inv * st.b;
  const Matrix sts = out.s_tilde.transpose() * out.s_tilde;
  out.a_tilde = out.a_check + st.b * out.q_check * out.b_tilde.transpose() * sts;
  out.q_tilde =
      symmetrize(out.q_check + out.q_check * out.b_tilde.transpose() * sts * out.b_tilde * out.q_check);
  out.c_tilde = Matrix(srows + model.p, model.n);
  out.c_tilde.topRows(srows) = out.s_tilde * a_check_inv;
  out.c_tilde.bottomRows(model.p) = next.c;
  out.r_tilde = Matrix::Zero(srows + model.p, srows + model.p);
  out.r_tilde.topLeftCorner(srows, srows) =
      symmetrize(Matrix::Identity(srows, srows) +
                 out.s_tilde * out.b_tilde * out.q_check * out.b_tilde.transpose() * out.s_tilde.transpose());
  out.r_tilde.bottomRightCorner(model.p, model.p) = next.r;
  return out;
}

/// Measurement-update PCM step in the tilde form:
/// {[Atilde P Atilde^T + B Qtilde B^T]^{-1} + Ctilde^T Rtilde^{-1} Ctilde}^{-1}.
/// Agrees with pcm_step_adjusted for every admissible P.
inline Matrix pcm_step_tilde(const PlantModel& model, const Matrix& p, int t) {
  const PlantStage& st = model.stage(t);
  const TildeMatrices tld = tilde_matrices(model, t);
  const Matrix pred = symmetrize(tld.a_tilde * p * tld.a_tilde.transpose() +
                                 st.b * tld.q_tilde * st.b.transpose());
  return information_update(pred, tld.c_tilde, tld.r_tilde);
}

/// 2n x 2n block matrix with the four n x n blocks individually addressable.
struct HamiltonianBlock {
  Matrix phi11, phi12, phi21, phi22;

  Eigen::Index dim() const { return phi11.rows(); }

  Matrix assemble() const {
    const Eigen::Index n = dim();
    Matrix full(2 * n, 2 * n);
    full.topLeftCorner(n, n) = phi11;
    full.topRightCorner(n, n) = phi12;
    full.bottomLeftCorner(n, n) = phi21;
    full.bottomRightCorner(n, n) = phi22;
    return full;
  }

  static HamiltonianBlock from_full(const Matrix& full) {
    if (full.rows() != full.cols() || full.rows() % 2 != 0) {
      throw ConfigError("block matrix must be square with even dimension");
    }
    const Eigen::Index n = full.rows() / 2;
    return {full.topLeftCorner(n, n), full.topRightCorner(n, n), full.bottomLeftCorner(n, n),
            full.bottomRightCorner(n, n)};
  }

  friend HamiltonianBlock operator*(const HamiltonianBlock& a, const HamiltonianBlock& b) {
    return {a.phi11 * b.phi11 + a.phi12 * b.phi21, a.phi11 * b.phi12 + a.phi12 * b.phi22,
            a.phi21 * b.phi11 + a.phi22 * b.phi21, a.phi21 * b.phi12 + a.phi22 * b.phi22};
  }
};

/// Residual of the structure identity Phi^T J Phi = J with
/// J = [[0, I], [-I, 0]] in block form.
inline double hamiltonian_residual(const HamiltonianBlock& phi) {
  const Eigen::Index n = phi.dim();
  const Matrix full = phi.assemble();
  Matrix j = Matrix::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n) = Matrix::Identity(n, n);
  j.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
  return (full.transpose() * j * full - j).norm();
}

/// H_m(Phi, P) = (Phi11 P + Phi12)(Phi21 P + Phi22)^{-1}, the fractional map
/// the PCM recursion factors through. Result re-symmetrized.
inline Matrix homographic(const HamiltonianBlock& phi, const Matrix& p) {
  const Matrix denom = phi.phi21 * p + phi.phi22;
  Eigen::PartialPivLU<Matrix> lu(denom);
  if (lu.rcond() < kRcondFloor) {
    throw NumericError("homographic transform undefined: denominator block is singular");
  }
  // X = N D^{-1} solved as D^T X^T = N^T.
  const Matrix numer = phi.phi11 * p + phi.phi12;
  Eigen::PartialPivLU<Matrix> lut(Matrix(denom.transpose()));
  return symmetrize(lut.solve(Matrix(numer.transpose())).transpose());
}

/// One-step transition block for the PCM dynamics at time t. gamma = 0 gives
/// the propagation-only block [[A, BQB^T A^{-T}], [0, A^{-T}]]; gamma = 1
/// gives the update block built from the tilde matrices. Both satisfy the
/// structure identity and the sign conditions
/// Phi12 Phi11^T >= 0, Phi11^T Phi21 >= 0.
inline HamiltonianBlock build_phi(const PlantModel& model, int t, int gamma) {
  if (gamma != 0 && gamma != 1) throw UsageError("build_phi: gamma must be 0 or 1");
  const PlantStage& st = model.stage(t);
  HamiltonianBlock phi;
  if (gamma == 0) {
    const Matrix a_inv_t = general_inverse(st.a, "A").transpose();
    phi.phi11 = st.a;
    phi.phi12 = st.b * st.q * st.b.transpose() * a_inv_t;
    phi.phi21 = Matrix::Zero(model.n, model.n);
    phi.phi22 = a_inv_t;
    return phi;
  }
  const TildeMatrices tld = tilde_matrices(model, t);
  const Matrix g = symmetrize(st.b * tld.q_tilde * st.b.transpose());
  const Matrix h = symmetrize(tld.c_tilde.transpose() *
                              spd_solve(tld.r_tilde, tld.c_tilde, "Rtilde"));
  const Matrix a_inv_t = general_inverse(tld.a_tilde, "Atilde").transpose();
  phi.phi11 = tld.a_tilde;
  phi.phi12 = g * a_inv_t;
  phi.phi21 = h * tld.a_tilde;
  phi.phi22 = (Matrix::Identity(model.n, model.n) + h * g) * a_inv_t;
  return phi;
}

/// PCM after a whole arrival sequence in one shot: forms the time-ordered
/// block product (latest step leftmost) and applies a single fractional map.
struct PcmProductResult {
  Matrix p;
  double product_cond = 0.0;   // spectral condition estimate of the product
  bool cond_warning = false;   // set when the product conditioning passed 1e10
};

/// gamma_sequence[i] is the arrival indicator of step i+1; the accumulated
/// block product is Phi_t ... Phi_1 (latest leftmost), matching step-by-step
/// application of the recursion from p0.
inline PcmProductResult pcm_via_product(const PlantModel& model, const std::vector<int>& gamma_sequence,
                                        const Matrix& p0) {
  HamiltonianBlock prod{Matrix::Identity(model.n, model.n), Matrix::Zero(model.n, model.n),
                        Matrix::Zero(model.n, model.n), Matrix::Identity(model.n, model.n)};
  for (std::size_t i = 0; i < gamma_sequence.size(); ++i) {
    const HamiltonianBlock phi = build_phi(model, static_cast<int>(i), gamma_sequence[i]);
    prod = phi * prod;
  }
  PcmProductResult out;
  out.product_cond = condition_number(prod.assemble());
  out.cond_warning = out.product_cond > 1e10;
  out.p = homographic(prod, p0);
  return out;
}

}  // namespace rseio
