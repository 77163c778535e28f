#pragma once

#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "pulselab/grid.hpp"

namespace pulselab::detail {

// Low-order periodic finite-difference analogue of a two-component mode
// operator, used to precondition spectral solves:
//   [ d_zz + c1 d_z + diag(v1) - s      a12            ]
//   [ a21                       c2 d_z + a22 - s       ]
// The u1 transport term is centered; the u2 transport term is upwinded by the
// sign of c2. An optional border column/row adds one trailing unknown.
template <class S>
Eigen::SparseMatrix<S> fd_mode_matrix(int N, double dz, double c1, double c2, const VectorXd& v1,
                                      double a12, double a21, double a22, S shift,
                                      const Eigen::Matrix<S, Eigen::Dynamic, 1>* border_col = nullptr,
                                      const Eigen::Matrix<S, Eigen::Dynamic, 1>* border_row = nullptr,
                                      S corner = S(0)) {
  using T = Eigen::Triplet<S>;
  const bool bordered = border_col && border_row;
  const int dim = 2 * N + (bordered ? 1 : 0);
  std::vector<T> t;
  t.reserve(static_cast<size_t>(N) * 8 + (bordered ? 4 * N + 1 : 0));
  const double idz2 = 1.0 / (dz * dz);
  const double idz = 1.0 / dz;
  for (int i = 0; i < N; ++i) {
    const int im = (i + N - 1) % N, ip = (i + 1) % N;
    t.emplace_back(i, i, S(-2.0 * idz2 + v1[i]) - shift);
    t.emplace_back(i, im, S(idz2 - 0.5 * c1 * idz));
    t.emplace_back(i, ip, S(idz2 + 0.5 * c1 * idz));
    t.emplace_back(i, N + i, S(a12));
    t.emplace_back(N + i, i, S(a21));
    if (c2 > 0.0) {
      t.emplace_back(N + i, N + i, S(a22 - c2 * idz) - shift);
      t.emplace_back(N + i, N + ip, S(c2 * idz));
    } else if (c2 < 0.0) {
      t.emplace_back(N + i, N + i, S(a22 + c2 * idz) - shift);
      t.emplace_back(N + i, N + im, S(-c2 * idz));
    } else {
      t.emplace_back(N + i, N + i, S(a22) - shift);
    }
  }
  if (bordered) {
    for (int i = 0; i < 2 * N; ++i) {
      t.emplace_back(i, 2 * N, (*border_col)[i]);
      t.emplace_back(2 * N, i, (*border_row)[i]);
    }
    t.emplace_back(2 * N, 2 * N, corner);
  }
  Eigen::SparseMatrix<S> A(dim, dim);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// Sparse LU of an unbordered block plus one border row/column handled by a
// Schur complement; a dense border would otherwise fill the factors.
template <class S>
class BorderedLu {
 public:
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  bool compute(const Eigen::SparseMatrix<S>& A, const Vec* col = nullptr, const Vec* row = nullptr,
               S corner = S(0)) {
    lu_.compute(A);
    if (lu_.info() != Eigen::Success) return false;
    bordered_ = col && row;
    if (bordered_) {
      row_ = *row;
      yb_ = lu_.solve(*col);
      denom_ = corner - (row_.transpose() * yb_).value();
      if (denom_ == S(0)) return false;
    }
    return true;
  }
  Vec solve(const Vec& rhs) const {
    if (!bordered_) return lu_.solve(rhs);
    const Eigen::Index n = rhs.size() - 1;
    Vec y = lu_.solve(Vec(rhs.head(n)));
    const S xi = (rhs[n] - (row_.transpose() * y).value()) / denom_;
    Vec out(n + 1);
    out.head(n) = y - xi * yb_;
    out[n] = xi;
    return out;
  }

 private:
  Eigen::SparseLU<Eigen::SparseMatrix<S>, Eigen::COLAMDOrdering<int>> lu_;
  bool bordered_ = false;
  Vec row_, yb_;
  S denom_ = S(0);
};

}  // namespace pulselab::detail
