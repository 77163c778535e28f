#include "pulselab/linalg.hpp"

#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "pulselab/errors.hpp"

namespace pulselab {

namespace {

template <class Mat>
Mat expm_impl(const Mat& A) {
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;
  const Eigen::Index n = A.rows();
  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > theta13) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
  const Mat As = A / std::ldexp(1.0, s);
  const Mat I = Mat::Identity(n, n);
  const Mat A2 = As * As;
  const Mat A4 = A2 * A2;
  const Mat A6 = A4 * A2;
  Mat inner = b[13] * A6 + b[11] * A4 + b[9] * A2;
  Mat U = As * (A6 * inner + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
  Mat inner2 = b[12] * A6 + b[10] * A4 + b[8] * A2;
  Mat V = A6 * inner2 + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
  Mat R = (V - U).partialPivLu().solve(V + U);
  for (int i = 0; i < s; ++i) R = R * R;
  return R;
}

}  // namespace

MatrixXd expm(const MatrixXd& A) { return expm_impl(A); }
MatrixXcd expm(const MatrixXcd& A) { return expm_impl(A); }

EigenPairs shift_invert_arnoldi(const VecOp& solve, const VecOp& apply, Eigen::Index n,
                                cplx shift, int count, double tol, int max_dim, unsigned seed) {
  max_dim = static_cast<int>(std::min<Eigen::Index>(max_dim, n));
  count = std::min(count, max_dim);
  MatrixXcd V(n, max_dim + 1);
  MatrixXcd H = MatrixXcd::Zero(max_dim + 1, max_dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  VectorXcd v0(n);
  for (Eigen::Index i = 0; i < n; ++i) v0[i] = cplx(nd(rng), nd(rng));
  V.col(0) = v0 / v0.norm();

  EigenPairs best;
  const int first_check = std::min(max_dim, std::max(2 * count + 10, 30));
  for (int j = 0; j < max_dim; ++j) {
    VectorXcd w = solve(VectorXcd(V.col(j)));
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) {
        const cplx h = V.col(i).dot(w);
        w -= h * V.col(i);
        H(i, j) += h;
      }
    }
    const double hn = w.norm();
    H(j + 1, j) = hn;
    const bool breakdown = hn < 1e-14 * H.col(j).norm();
    if (!breakdown) V.col(j + 1) = w / hn;
    const int m = j + 1;
    const bool check = breakdown || m == max_dim || (m >= first_check && (m - first_check) % 10 == 0);
    if (!check) continue;

    Eigen::ComplexEigenSolver<MatrixXcd> es(H.topLeftCorner(m, m));
    const VectorXcd theta = es.eigenvalues();
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(theta[a]) > std::abs(theta[b]); });
    EigenPairs cur;
    const int take = std::min(count, m);
    cur.vectors.resize(n, take);
    bool all_ok = true;
    for (int q = 0; q < take; ++q) {
      const int idx = order[q];
      const cplx lam = shift + 1.0 / theta[idx];
      VectorXcd y = V.leftCols(m) * es.eigenvectors().col(idx);
      y /= y.norm();
      const double r = (apply(y) - lam * y).norm() / std::max(1.0, std::abs(lam));
      cur.values.push_back(lam);
      cur.vectors.col(q) = y;
      cur.residuals.push_back(r);
      if (!(r <= tol)) all_ok = false;
    }
    best = std::move(cur);
    if (all_ok || breakdown) break;
  }
  // Nearest first.
  std::vector<int> order(best.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(best.values[a] - shift) < std::abs(best.values[b] - shift);
  });
  EigenPairs out;
  out.vectors.resize(n, static_cast<Eigen::Index>(order.size()));
  for (size_t q = 0; q < order.size(); ++q) {
    out.values.push_back(best.values[order[q]]);
    out.residuals.push_back(best.residuals[order[q]]);
    out.vectors.col(static_cast<Eigen::Index>(q)) = best.vectors.col(order[q]);
  }
  return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const size_t n = std::min(x.size(), y.size());
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

}  // namespace pulselab
