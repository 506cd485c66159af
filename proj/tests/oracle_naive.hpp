#pragma once

// Independent reference implementations used as test oracles.
//
// Everything here is written with plain scalar loops on nested std::vector
// storage: Gauss-Jordan elimination for inverses, a cyclic Jacobi sweep for
// symmetric eigenproblems, direct enumeration for chain probabilities.
// Nothing in this file calls into the library under test; agreement between
// the two paths is the point of the comparison tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace naive {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat zeros(std::size_t r, std::size_t c) {
  return Mat(r, Vec(c, 0.0));
}

inline Mat identity(std::size_t n) {
  Mat m = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

inline std::size_t rows(const Mat& a) { return a.size(); }
inline std::size_t cols(const Mat& a) { return a.empty() ? 0 : a[0].size(); }

inline Mat from_eigen(const Eigen::MatrixXd& e) {
  Mat m = zeros(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j)
      m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = e(i, j);
  return m;
}

inline Eigen::MatrixXd to_eigen(const Mat& m) {
  Eigen::MatrixXd e(static_cast<Eigen::Index>(rows(m)), static_cast<Eigen::Index>(cols(m)));
  for (std::size_t i = 0; i < rows(m); ++i)
    for (std::size_t j = 0; j < cols(m); ++j)
      e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
  return e;
}

inline Vec from_eigen_vec(const Eigen::VectorXd& e) {
  Vec v(static_cast<std::size_t>(e.size()));
  for (Eigen::Index i = 0; i < e.size(); ++i) v[static_cast<std::size_t>(i)] = e(i);
  return v;
}

inline Eigen::VectorXd to_eigen_vec(const Vec& v) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) e(static_cast<Eigen::Index>(i)) = v[i];
  return e;
}

inline Mat transpose(const Mat& a) {
  Mat t = zeros(cols(a), rows(a));
  for (std::size_t i = 0; i < rows(a); ++i)
    for (std::size_t j = 0; j < cols(a); ++j) t[j][i] = a[i][j];
  return t;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (cols(a) != rows(b)) throw std::invalid_argument("naive::matmul shape");
  Mat c = zeros(rows(a), cols(b));
  for (std::size_t i = 0; i < rows(a); ++i)
    for (std::size_t k = 0; k < cols(a); ++k) {
      const double aik = a[i][k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < cols(b); ++j) c[i][j] += aik * b[k][j];
    }
  return c;
}

inline Vec matvec(const Mat& a, const Vec& x) {
  if (cols(a) != x.size()) throw std::invalid_argument("naive::matvec shape");
  Vec y(rows(a), 0.0);
  for (std::size_t i = 0; i < rows(a); ++i)
    for (std::size_t j = 0; j < cols(a); ++j) y[i] += a[i][j] * x[j];
  return y;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < rows(a); ++i)
    for (std::size_t j = 0; j < cols(a); ++j) c[i][j] += b[i][j];
  return c;
}

inline Mat sub(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < rows(a); ++i)
    for (std::size_t j = 0; j < cols(a); ++j) c[i][j] -= b[i][j];
  return c;
}

inline Mat scale(double s, const Mat& a) {
  Mat c = a;
  for (auto& row : c)
    for (auto& v : row) v *= s;
  return c;
}

// Stacks blocks vertically; all blocks must share a column count.
inline Mat vstack(const std::vector<Mat>& blocks) {
  std::size_t r = 0, c = 0;
  for (const auto& b : blocks) {
    r += rows(b);
    if (cols(b) > 0) c = cols(b);
  }
  Mat m = zeros(r, c);
  std::size_t at = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < rows(b); ++i) m[at + i] = b[i];
    at += rows(b);
  }
  return m;
}

// Side-by-side concatenation; all blocks must share a row count.
inline Mat hstack(const std::vector<Mat>& blocks) {
  std::size_t r = 0, c = 0;
  for (const auto& b : blocks) {
    c += cols(b);
    if (rows(b) > 0) r = rows(b);
  }
  Mat m = zeros(r, c);
  std::size_t at = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < rows(b); ++i)
      for (std::size_t j = 0; j < cols(b); ++j) m[i][at + j] = b[i][j];
    at += cols(b);
  }
  return m;
}

inline Mat blkdiag(const Mat& a, const Mat& b) {
  Mat m = zeros(rows(a) + rows(b), cols(a) + cols(b));
  for (std::size_t i = 0; i < rows(a); ++i)
    for (std::size_t j = 0; j < cols(a); ++j) m[i][j] = a[i][j];
  for (std::size_t i = 0; i < rows(b); ++i)
    for (std::size_t j = 0; j < cols(b); ++j) m[rows(a) + i][cols(a) + j] = b[i][j];
  return m;
}

// Gauss-Jordan inverse with partial pivoting.
inline Mat inverse(Mat a) {
  const std::size_t n = rows(a);
  if (n != cols(a)) throw std::invalid_argument("naive::inverse: square required");
  Mat inv = identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-300) throw std::runtime_error("naive::inverse: singular");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const double d = a[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

inline Mat matpow(const Mat& a, unsigned k) {
  Mat p = identity(rows(a));
  for (unsigned i = 0; i < k; ++i) p = matmul(p, a);
  return p;
}

// Cyclic Jacobi diagonalization of a symmetric matrix.
// Returns eigenvalues ascending; fills v with the matching eigenvectors
// (columns) when requested.
inline Vec jacobi_eigenvalues(Mat a, Mat* v_out = nullptr) {
  const std::size_t n = rows(a);
  Mat v = identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-300) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = {a[i][i], i};
  std::sort(order.begin(), order.end());
  Vec eigs(n);
  Mat vs = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    eigs[i] = order[i].first;
    for (std::size_t k = 0; k < n; ++k) vs[k][i] = v[k][order[i].second];
  }
  if (v_out) *v_out = vs;
  return eigs;
}

// f(M) = V f(diag) V^T for symmetric M; used for the inverse square root.
inline Mat symmetric_function(const Mat& m, double (*f)(double)) {
  Mat v;
  Vec eigs = jacobi_eigenvalues(m, &v);
  const std::size_t n = rows(m);
  Mat d = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) d[i][i] = f(eigs[i]);
  return matmul(matmul(v, d), transpose(v));
}

inline Mat inv_sqrt(const Mat& m) {
  return symmetric_function(m, +[](double x) {
    if (x <= 0.0) throw std::runtime_error("naive::inv_sqrt: non-positive eigenvalue");
    return 1.0 / std::sqrt(x);
  });
}

// ---------------------------------------------------------------------------
// Sensitivity stacking: for k = 1..n_e emit C*dA_k then dC_k*A, and the same
// with B in place of A for the second stack, assembled entry by entry.
// ---------------------------------------------------------------------------
struct SensitivityOracle {
  Mat s;
  Mat t;
};

inline SensitivityOracle assemble_sensitivity(const Mat& a, const Mat& b, const Mat& c,
                                              const std::vector<Mat>& da,
                                              const std::vector<Mat>& db,
                                              const std::vector<Mat>& dc) {
  const std::size_t n = cols(a), m = cols(b), p = rows(c), ne = da.size();
  Mat s = zeros(2 * ne * p, n);
  Mat t = zeros(2 * ne * p, m);
  for (std::size_t k = 0; k < ne; ++k) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < n; ++l) acc += c[i][l] * da[k][l][j];
        s[2 * k * p + i][j] = acc;
        acc = 0.0;
        for (std::size_t l = 0; l < n; ++l) acc += dc[k][i][l] * a[l][j];
        s[(2 * k + 1) * p + i][j] = acc;
      }
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < n; ++l) acc += c[i][l] * db[k][l][j];
        t[2 * k * p + i][j] = acc;
        acc = 0.0;
        for (std::size_t l = 0; l < n; ++l) acc += dc[k][i][l] * b[l][j];
        t[(2 * k + 1) * p + i][j] = acc;
      }
    }
  }
  return {s, t};
}

// ---------------------------------------------------------------------------
// Penalized-cost adjusted matrices, assembled directly from the definitions.
// ---------------------------------------------------------------------------
struct AdjustedOracle {
  Mat p_hat, q_hat, b_hat, a_hat;
};

inline AdjustedOracle adjusted_matrices(const Mat& a, const Mat& b, const Mat& q,
                                        const Mat& p, const Mat& s, const Mat& t,
                                        double lambda) {
  const std::size_t n = rows(a);
  const Mat st = transpose(s), tt = transpose(t);
  const Mat m1 = add(identity(rows(s)), scale(lambda, matmul(matmul(s, p), st)));
  const Mat q_hat = inverse(add(inverse(q), scale(lambda, matmul(matmul(tt, inverse(m1)), t))));
  const Mat p_hat = inverse(add(inverse(p), scale(lambda, matmul(st, s))));
  const Mat b_hat = sub(b, scale(lambda, matmul(matmul(matmul(a, p_hat), st), t)));
  const Mat left = sub(a, scale(lambda, matmul(matmul(matmul(b_hat, q_hat), tt), s)));
  const Mat right = sub(identity(n), scale(lambda, matmul(matmul(p_hat, st), s)));
  return {p_hat, q_hat, b_hat, matmul(left, right)};
}

// ---------------------------------------------------------------------------
// Closed-form single-update oracle: build the full penalized least-squares
// normal equations over the stacked variable col{x, w}, solve them, and map
// through [A B]. The pseudo-covariance follows from the same assembled
// system. This path never touches the adjusted/tilde factorizations.
// ---------------------------------------------------------------------------
struct UpdateOracle {
  Vec x_next;
  Mat p_next;
};

inline UpdateOracle closed_form_update(const Mat& a, const Mat& b, const Mat& c,
                                       const Mat& q, const Mat& r, const Mat& p,
                                       const Mat& s, const Mat& t, double lambda,
                                       const Vec& x_hat, const Vec& y) {
  const std::size_t n = cols(a), m = cols(b);
  const Mat ab = hstack({a, b});
  const Mat stk = hstack({s, t});
  const Mat prior = blkdiag(inverse(p), inverse(q));
  Mat g = add(prior, scale(lambda, matmul(transpose(stk), stk)));
  const Mat cab = matmul(c, ab);
  const Mat rinv = inverse(r);
  const Mat g_full = add(g, matmul(matmul(transpose(cab), rinv), cab));
  Vec stacked(n + m, 0.0);
  for (std::size_t i = 0; i < n; ++i) stacked[i] = x_hat[i];
  Vec rhs = matvec(prior, stacked);
  const Vec ry = matvec(matmul(transpose(cab), rinv), y);
  for (std::size_t i = 0; i < n + m; ++i) rhs[i] += ry[i];
  const Mat g_inv = inverse(g_full);
  const Vec alpha = matvec(g_inv, rhs);
  return {matvec(ab, alpha), matmul(matmul(ab, g_inv), transpose(ab))};
}

// ---------------------------------------------------------------------------
// Tilde-form matrices assembled directly from their definitions (independent
// inverse square root via the Jacobi eigensolver).
// ---------------------------------------------------------------------------
struct TildeOracle {
  Mat a_check, q_check, s_tilde, a_tilde, b_tilde, q_tilde, c_tilde, r_tilde;
};

inline TildeOracle tilde_matrices(const Mat& a, const Mat& b, const Mat& c, const Mat& q,
                                  const Mat& r, const Mat& s, const Mat& t, double lambda) {
  const Mat tt = transpose(t), st = transpose(s);
  const Mat q_check = inverse(add(inverse(q), scale(lambda, matmul(tt, t))));
  const Mat a_check = sub(a, scale(lambda, matmul(matmul(matmul(b, q_check), tt), s)));
  const Mat w = add(identity(rows(t)), scale(lambda, matmul(matmul(t, q), tt)));
  const Mat s_tilde = scale(std::sqrt(lambda), matmul(inv_sqrt(w), s));
  const Mat ac_inv = inverse(a_check);
  const Mat b_tilde = matmul(ac_inv, b);
  const Mat sts = matmul(transpose(s_tilde), s_tilde);
  const Mat a_tilde = add(a_check, matmul(matmul(matmul(b, q_check), transpose(b_tilde)), sts));
  const Mat q_tilde =
      add(q_check, matmul(matmul(q_check, matmul(transpose(b_tilde), sts)), matmul(b_tilde, q_check)));
  const Mat c_tilde = vstack({matmul(s_tilde, ac_inv), c});
  const Mat r_top = add(identity(rows(s_tilde)),
                        matmul(matmul(s_tilde, matmul(b_tilde, q_check)), transpose(matmul(s_tilde, b_tilde))));
  const Mat r_tilde = blkdiag(r_top, r);
  return {a_check, q_check, s_tilde, a_tilde, b_tilde, q_tilde, c_tilde, r_tilde};
}

// ---------------------------------------------------------------------------
// Arrival-sequence probability by direct enumeration of the hidden initial
// state and multiplication of transition factors.
// ---------------------------------------------------------------------------
inline double markov_probability(double alpha, double beta, double gamma0,
                                 const std::vector<int>& bits) {
  double total = 0.0;
  for (int g0 = 0; g0 <= 1; ++g0) {
    double p = g0 ? gamma0 : 1.0 - gamma0;
    int prev = g0;
    for (int bit : bits) {
      if (prev == 1)
        p *= bit ? alpha : 1.0 - alpha;
      else
        p *= bit ? 1.0 - beta : beta;
      prev = bit;
    }
    total += p;
  }
  return total;
}

inline double bernoulli_probability(double gamma_bar, const std::vector<int>& bits) {
  double p = 1.0;
  for (int bit : bits) p *= bit ? gamma_bar : 1.0 - gamma_bar;
  return p;
}

// ---------------------------------------------------------------------------
// Two-pass empirical MSE: first materialize every squared norm, then average.
// ---------------------------------------------------------------------------
inline Vec two_pass_mse(const std::vector<std::vector<Vec>>& errors) {
  if (errors.empty()) return {};
  const std::size_t horizon = errors[0].size();
  std::vector<Vec> squared(errors.size(), Vec(horizon, 0.0));
  for (std::size_t j = 0; j < errors.size(); ++j)
    for (std::size_t t = 0; t < horizon; ++t) {
      double acc = 0.0;
      for (double e : errors[j][t]) acc += e * e;
      squared[j][t] = acc;
    }
  Vec mse(horizon, 0.0);
  for (std::size_t t = 0; t < horizon; ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j < errors.size(); ++j) acc += squared[j][t];
    mse[t] = acc / static_cast<double>(errors.size());
  }
  return mse;
}

// Quadratic-cost evaluation of the penalized objective at a candidate
// (x, w) pair; lets tests confirm the closed-form update is the minimizer.
inline double penalized_cost(const Mat& a, const Mat& b, const Mat& c, const Mat& q,
                             const Mat& r, const Mat& p, const Mat& s, const Mat& t,
                             double lambda, const Vec& x_hat, const Vec& y,
                             const Vec& x, const Vec& w) {
  const std::size_t n = x.size();
  Vec dx(n);
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] - x_hat[i];
  const Mat p_inv = inverse(p), q_inv = inverse(q), r_inv = inverse(r);
  double cost = 0.0;
  const Vec pdx = matvec(p_inv, dx);
  for (std::size_t i = 0; i < n; ++i) cost += dx[i] * pdx[i];
  const Vec qw = matvec(q_inv, w);
  for (std::size_t i = 0; i < w.size(); ++i) cost += w[i] * qw[i];
  Vec pred = matvec(a, x);
  const Vec bw = matvec(b, w);
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += bw[i];
  Vec innov = matvec(c, pred);
  for (std::size_t i = 0; i < innov.size(); ++i) innov[i] = y[i] - innov[i];
  const Vec ri = matvec(r_inv, innov);
  for (std::size_t i = 0; i < innov.size(); ++i) cost += innov[i] * ri[i];
  Vec sens = matvec(s, x);
  const Vec tw = matvec(t, w);
  for (std::size_t i = 0; i < sens.size(); ++i) sens[i] += tw[i];
  for (std::size_t i = 0; i < sens.size(); ++i) cost += lambda * sens[i] * sens[i];
  return cost;
}

// ---------------------------------------------------------------------------
// Exact two-sample Kolmogorov-Smirnov statistic by brute force: evaluate both
// empirical CDFs at every sample point from either set.
// ---------------------------------------------------------------------------
inline double ks_statistic(const Vec& a, const Vec& b) {
  auto cdf = [](const Vec& s, double x) {
    std::size_t cnt = 0;
    for (double v : s)
      if (v <= x) ++cnt;
    return static_cast<double>(cnt) / static_cast<double>(s.size());
  };
  double d = 0.0;
  for (const Vec* s : {&a, &b}) {
    for (double x : *s) {
      d = std::max(d, std::fabs(cdf(a, x) - cdf(b, x)));
      const double xm = std::nextafter(x, -std::numeric_limits<double>::infinity());
      d = std::max(d, std::fabs(cdf(a, xm) - cdf(b, xm)));
    }
  }
  return d;
}

// Direct kernel-sum density estimate with an externally supplied bandwidth.
inline Vec kernel_density(const Vec& samples, const Vec& grid, double h) {
  Vec out(grid.size(), 0.0);
  const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * h * static_cast<double>(samples.size()));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double x : samples) {
      const double z = (grid[g] - x) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out[g] = acc * norm;
  }
  return out;
}

}  // namespace naive
