#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "pulselab/grid.hpp"

namespace pulselab {

struct GmresResult {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// Restarted GMRES with right preconditioning, x <- solution of A x = b.
// Uses modified Gram-Schmidt with one reorthogonalization pass and keeps the
// preconditioned directions, so a variable preconditioner is allowed.
template <class Vec, class ApplyA, class ApplyM>
GmresResult gmres(ApplyA&& A, ApplyM&& Minv, const Vec& b, Vec& x, double tol, int restart = 60,
                  int max_iter = 2000) {
  using S = typename Vec::Scalar;
  using Real = typename Eigen::NumTraits<S>::Real;
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  GmresResult res;
  const Eigen::Index n = b.size();
  if (x.size() != n) x = Vec::Zero(n);
  const Real bnorm = b.norm();
  if (bnorm == Real(0)) {
    x.setZero();
    res.converged = true;
    return res;
  }
  const int m = restart;
  while (true) {
    Vec r = b - A(x);
    Real beta = r.norm();
    res.rel_residual = beta / bnorm;
    if (res.rel_residual <= tol) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= max_iter) return res;
    Mat V(n, m + 1), Z(n, m), H = Mat::Zero(m + 1, m);
    std::vector<Real> cs(m);
    std::vector<S> sn(m);
    Vec g = Vec::Zero(m + 1);
    V.col(0) = r / beta;
    g[0] = beta;
    int k = 0;
    for (int j = 0; j < m; ++j) {
      Z.col(j) = Minv(Vec(V.col(j)));
      Vec w = A(Vec(Z.col(j)));
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= j; ++i) {
          const S h = V.col(i).dot(w);
          w -= h * V.col(i);
          H(i, j) += h;
        }
      }
      const Real hn = w.norm();
      H(j + 1, j) = hn;
      if (hn > Real(0)) V.col(j + 1) = w / hn;
      for (int i = 0; i < j; ++i) {
        const S t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -Eigen::numext::conj(sn[i]) * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const S a = H(j, j);
      const Real aa = std::abs(a);
      const Real rr = std::sqrt(aa * aa + hn * hn);
      if (aa == Real(0)) {
        cs[j] = 0;
        sn[j] = 1;
      } else {
        cs[j] = aa / rr;
        sn[j] = (a / aa) * hn / rr;
      }
      H(j, j) = cs[j] * a + sn[j] * S(hn);
      H(j + 1, j) = 0;
      g[j + 1] = -Eigen::numext::conj(sn[j]) * g[j];
      g[j] = cs[j] * g[j];
      ++res.iterations;
      k = j + 1;
      if (std::abs(g[j + 1]) / bnorm <= 0.5 * tol || hn == Real(0) ||
          res.iterations >= max_iter)
        break;
    }
    Vec y = H.topLeftCorner(k, k).template triangularView<Eigen::Upper>().solve(g.head(k));
    x += Z.leftCols(k) * y;
  }
}

// Scaling-and-squaring Pade(13) matrix exponential.
MatrixXd expm(const MatrixXd& A);
MatrixXcd expm(const MatrixXcd& A);

struct EigenPairs {
  std::vector<cplx> values;
  MatrixXcd vectors;            // columns normalized in the Euclidean norm
  std::vector<double> residuals;  // ||A v - lambda v|| / ||v||
};

using VecOp = std::function<VectorXcd(const VectorXcd&)>;

// Shift-invert Arnoldi: `solve` applies (A - shift)^{-1}, `apply` applies A.
// Returns the `count` eigenvalues nearest `shift`, sorted by distance.
EigenPairs shift_invert_arnoldi(const VecOp& solve, const VecOp& apply, Eigen::Index n,
                                cplx shift, int count, double tol, int max_dim,
                                unsigned seed = 1);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace pulselab
