#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "rseio/errors.hpp"

namespace rseio {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Reciprocal condition number below which an inverse/solve is refused.
inline constexpr double kRcondFloor = 1e-12;

/// Counts symmetrizations whose input drifted further from symmetry than the
/// documented tolerance; exposed so harnesses can report anomalies.
inline std::atomic<std::uint64_t>& asymmetry_anomalies() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

inline double asymmetry(const Matrix& m) {
  return (m - m.transpose()).norm();
}

/// (M + M^T)/2. Records an anomaly when the input was asymmetric beyond
/// 1e-10 relative to its norm.
inline Matrix symmetrize(const Matrix& m) {
  if (asymmetry(m) > 1e-10 * std::max(1.0, m.norm())) {
    asymmetry_anomalies().fetch_add(1, std::memory_order_relaxed);
  }
  return 0.5 * (m + m.transpose());
}

/// Positive definiteness via a pivoted LDL^T factorization: every pivot must
/// exceed 1e-12 times the matrix norm.
inline bool is_positive_definite(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (asymmetry(m) > 1e-8 * std::max(1.0, m.norm())) return false;
  Eigen::LDLT<Matrix> ldlt(symmetrize(m));
  if (ldlt.info() != Eigen::Success) return false;
  const double floor = 1e-12 * std::max(m.norm(), 1e-300);
  return ldlt.vectorD().minCoeff() > floor;
}

inline void require_positive_definite(const Matrix& m, const std::string& name) {
  if (!is_positive_definite(m)) {
    throw NumericError("matrix '" + name + "' is not symmetric positive definite");
  }
}

/// Inverse of a symmetric positive definite matrix with a conditioning guard.
inline Matrix spd_inverse(const Matrix& m, const std::string& name) {
  Eigen::LDLT<Matrix> ldlt(symmetrize(m));
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0 ||
      ldlt.rcond() < kRcondFloor) {
    throw NumericError("matrix '" + name + "' is singular or too ill-conditioned to invert");
  }
  return ldlt.solve(Matrix::Identity(m.rows(), m.cols()));
}

/// X = M^{-1} B for symmetric positive definite M.
inline Matrix spd_solve(const Matrix& m, const Matrix& b, const std::string& name) {
  Eigen::LDLT<Matrix> ldlt(symmetrize(m));
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0 ||
      ldlt.rcond() < kRcondFloor) {
    throw NumericError("matrix '" + name + "' is singular or too ill-conditioned to solve with");
  }
  return ldlt.solve(b);
}

/// General inverse with a conditioning guard.
inline Matrix general_inverse(const Matrix& m, const std::string& name) {
  Eigen::PartialPivLU<Matrix> lu(m);
  if (lu.rcond() < kRcondFloor) {
    throw NumericError("matrix '" + name + "' is singular or too ill-conditioned to invert");
  }
  return lu.solve(Matrix::Identity(m.rows(), m.cols()));
}

/// X = M^{-1} B for a general square M.
inline Matrix general_solve(const Matrix& m, const Matrix& b, const std::string& name) {
  Eigen::PartialPivLU<Matrix> lu(m);
  if (lu.rcond() < kRcondFloor) {
    throw NumericError("matrix '" + name + "' is singular or too ill-conditioned to solve with");
  }
  return lu.solve(b);
}

/// Symmetric square root via eigendecomposition. Eigenvalues slightly below
/// zero (down to -1e-12 relative) are clamped; anything lower is an error.
inline Matrix symmetric_sqrt(const Matrix& m, const std::string& name) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition failed for matrix '" + name + "'");
  }
  Vector d = es.eigenvalues();
  const double floor = -1e-12 * std::max(1.0, m.norm());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) < floor) {
      throw NumericError("matrix '" + name + "' has a negative eigenvalue; square root undefined");
    }
    d(i) = std::sqrt(std::max(d(i), 0.0));
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Inverse symmetric square root; requires strictly positive eigenvalues.
inline Matrix symmetric_inv_sqrt(const Matrix& m, const std::string& name) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition failed for matrix '" + name + "'");
  }
  Vector d = es.eigenvalues();
  const double floor = kRcondFloor * std::max(1.0, m.norm());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) <= floor) {
      throw NumericError("matrix '" + name + "' is not positive definite; inverse square root undefined");
    }
    d(i) = 1.0 / std::sqrt(d(i));
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Geodesic distance on the positive definite cone:
/// sqrt(sum_i log^2 lambda_i(P Q^{-1})), evaluated through the symmetric
/// whitened pencil L^{-1} P L^{-T} with Q = L L^T.
inline double riemannian_distance(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols() || p.rows() != p.cols()) {
    throw ConfigError("riemannian_distance: dimension mismatch");
  }
  require_positive_definite(p, "P");
  require_positive_definite(q, "Q");
  Eigen::LLT<Matrix> llt(symmetrize(q));
  if (llt.info() != Eigen::Success) {
    throw NumericError("matrix 'Q' is not positive definite in riemannian_distance");
  }
  const Matrix l = llt.matrixL();
  const Matrix white = l.triangularView<Eigen::Lower>().solve(
      Matrix(l.triangularView<Eigen::Lower>().solve(symmetrize(p)).transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(white));
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition failed in riemannian_distance");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double lam = es.eigenvalues()(i);
    if (lam <= 0.0) {
      throw NumericError("non-positive generalized eigenvalue in riemannian_distance");
    }
    const double lg = std::log(lam);
    acc += lg * lg;
  }
  return std::sqrt(acc);
}

enum class RankMode { column, row };

/// Numerical full-rank test: singular values above
/// max(rows, cols) * machine-epsilon * sigma_max count toward the rank.
inline bool rank_full(const Matrix& m, RankMode mode) {
  const Eigen::Index want = (mode == RankMode::column) ? m.cols() : m.rows();
  if (want == 0) return true;
  if (m.rows() == 0 || m.cols() == 0) return false;
  Eigen::JacobiSVD<Matrix> svd(m);
  const double smax = svd.singularValues()(0);
  if (smax <= 0.0) return false;
  const double thresh =
      static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon() * smax;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()(i) > thresh) ++rank;
  }
  return rank == want;
}

/// Spectral condition number estimate via SVD (small matrices only).
inline double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / (s(s.size() - 1));
}

/// Haar-distributed random orthogonal matrix: QR of a Gaussian matrix with
/// the sign of R's diagonal folded into Q.
template <class Urbg>
Matrix random_orthogonal(int n, Urbg& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix qmat = qr.householderQ();
  const Matrix rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (rmat(j, j) < 0.0) qmat.col(j) *= -1.0;
  }
  return qmat;
}

/// Random symmetric positive definite matrix U diag(lambda) U^T with Haar U
/// and log10(lambda) uniform on [-2, 2].
template <class Urbg>
Matrix random_pdm(int n, Urbg& rng) {
  const Matrix u = random_orthogonal(n, rng);
  std::uniform_real_distribution<double> expo(-2.0, 2.0);
  Vector lam(n);
  for (int i = 0; i < n; ++i) lam(i) = std::pow(10.0, expo(rng));
  return symmetrize(u * lam.asDiagonal() * u.transpose());
}

/// A^k for a small non-negative integer power.
inline Matrix matrix_power(const Matrix& a, int k) {
  if (k < 0) throw ConfigError("matrix_power: negative exponent");
  Matrix out = Matrix::Identity(a.rows(), a.cols());
  for (int i = 0; i < k; ++i) out = out * a;
  return out;
}

}  // namespace rseio
