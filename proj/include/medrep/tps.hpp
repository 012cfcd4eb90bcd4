#ifndef MEDREP_TPS_HPP_
#define MEDREP_TPS_HPP_

#include "medrep/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <vector>

namespace medrep {

// phi(r) = r^2 log r written in terms of s = r^2, with phi(0) = 0.
template <typename Scalar>
Scalar tps_kernel(Scalar s) {
  using std::log;
  return s > Scalar(0) ? Scalar(0.5) * s * log(s) : Scalar(0);
}

/// Thin-plate spline from R^2 to R^d:
///   u(t) = a0 + a1 t1 + a2 t2 + sum_j w_j phi(|t - t_j|).
template <typename Scalar>
struct ThinPlateSpline {
  Matrix<Scalar> sites;    // n x 2
  Matrix<Scalar> weights;  // n x d
  Matrix<Scalar> affine;   // 3 x d, rows (1, t1, t2)
  Scalar lambda = Scalar(0);

  Eigen::Index size() const { return sites.rows(); }
  Eigen::Index dims() const { return weights.cols(); }

  Vector<Scalar> operator()(Scalar t1, Scalar t2) const {
    Vector<Scalar> out = affine.row(0).transpose() + t1 * affine.row(1).transpose() + t2 * affine.row(2).transpose();
    for (Eigen::Index j = 0; j < size(); ++j) {
      const Scalar d1 = t1 - sites(j, 0), d2 = t2 - sites(j, 1);
      const Scalar k = tps_kernel(d1 * d1 + d2 * d2);
      if (k != Scalar(0)) out += k * weights.row(j).transpose();
    }
    return out;
  }

  // Value, first derivatives (d x 2) and second derivatives (d x 3 as
  // uu, uv, vv) at t.
  void derivatives(Scalar t1, Scalar t2, Vector<Scalar>& value, Matrix<Scalar>& jac, Matrix<Scalar>& hess) const {
    using std::log;
    const Eigen::Index d = dims();
    value = affine.row(0).transpose() + t1 * affine.row(1).transpose() + t2 * affine.row(2).transpose();
    jac.resize(d, 2);
    jac.col(0) = affine.row(1).transpose();
    jac.col(1) = affine.row(2).transpose();
    hess = Matrix<Scalar>::Zero(d, 3);
    const Scalar tiny = Scalar(1e-30);
    for (Eigen::Index j = 0; j < size(); ++j) {
      const Scalar d1 = t1 - sites(j, 0), d2 = t2 - sites(j, 1);
      const Scalar s = d1 * d1 + d2 * d2;
      const auto w = weights.row(j).transpose();
      if (s > Scalar(0)) value += tps_kernel(s) * w;
      const Scalar sc = s > tiny ? s : tiny;
      const Scalar g = log(sc) + Scalar(1);
      if (s > Scalar(0)) {
        jac.col(0) += (d1 * g) * w;
        jac.col(1) += (d2 * g) * w;
      }
      hess.col(0) += (g + Scalar(2) * d1 * d1 / sc) * w;
      hess.col(1) += (Scalar(2) * d1 * d2 / sc) * w;
      hess.col(2) += (g + Scalar(2) * d2 * d2 / sc) * w;
    }
  }
};

/// Factorisation of the TPS system for one set of sites, reused across
/// penalties and for generalised cross-validation.
///
/// With P = [1 t1 t2] = [Q1 Q2] [R; 0], the weights live in span(Q2):
/// w = Q2 g, (Q2' K Q2 + lambda I) g = Q2' y, and the residual at the sites
/// is lambda * w.
template <typename Scalar>
class TpsSystem {
 public:
  TpsSystem(const Matrix<Scalar>& sites) : sites_(sites) {
    const Eigen::Index n = sites.rows();
    if (n < 6) throw ComputeError("fit_tps: need at least 6 sites");
    K_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      K_(i, i) = Scalar(0);
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const Scalar s = (sites.row(i) - sites.row(j)).squaredNorm();
        K_(i, j) = K_(j, i) = tps_kernel(s);
      }
    }
    Matrix<Scalar> P(n, 3);
    P.col(0).setOnes();
    P.rightCols(2) = sites;
    Eigen::HouseholderQR<Matrix<Scalar>> qr(P);
    const Matrix<Scalar> Q = qr.householderQ() * Matrix<Scalar>::Identity(n, n);
    R_ = qr.matrixQR().topRows(3).template triangularView<Eigen::Upper>();
    using std::abs;
    const Scalar scale = R_.diagonal().cwiseAbs().maxCoeff();
    if (!(R_.diagonal().cwiseAbs().minCoeff() > Scalar(1e-10) * scale))
      throw ComputeError("fit_tps: parameter sites are collinear");
    Q1_ = Q.leftCols(3);
    Q2_ = Q.rightCols(n - 3);
    B_ = Q2_.transpose() * K_ * Q2_;
  }

  Eigen::Index size() const { return sites_.rows(); }

  ThinPlateSpline<Scalar> solve(const Matrix<Scalar>& y, Scalar lambda) const {
    if (lambda < Scalar(0)) throw ComputeError("fit_tps: lambda must be >= 0");
    Matrix<Scalar> A = B_;
    A.diagonal().array() += lambda;
    Eigen::LDLT<Matrix<Scalar>> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw ComputeError("fit_tps: singular system");
    const Matrix<Scalar> g = ldlt.solve(Q2_.transpose() * y);
    if (!g.allFinite()) throw ComputeError("fit_tps: singular system (duplicate sites?)");
    return assemble(y, Q2_ * g, lambda);
  }

  // Generalised cross-validation score summed over output columns,
  // n |(I - A) y|^2 / tr(I - A)^2, for each penalty in `grid`.
  std::vector<Scalar> gcv(const Matrix<Scalar>& y, const std::vector<Scalar>& grid) const {
    ensure_eigen();
    const Matrix<Scalar> z = evecs_.transpose() * (Q2_.transpose() * y);
    const Scalar n = static_cast<Scalar>(size());
    std::vector<Scalar> out;
    for (Scalar lambda : grid) {
      Scalar rss = 0, trace = 0;
      for (Eigen::Index i = 0; i < evals_.size(); ++i) {
        const Scalar f = lambda / (evals_(i) + lambda);
        trace += f;
        rss += f * f * z.row(i).squaredNorm();
      }
      out.push_back(trace > Scalar(0) ? n * rss / (trace * trace) : std::numeric_limits<Scalar>::infinity());
    }
    return out;
  }

 private:
  ThinPlateSpline<Scalar> assemble(const Matrix<Scalar>& y, const Matrix<Scalar>& w, Scalar lambda) const {
    ThinPlateSpline<Scalar> t;
    t.sites = sites_;
    t.weights = w;
    t.lambda = lambda;
    const Matrix<Scalar> rhs = Q1_.transpose() * (y - K_ * w - lambda * w);
    t.affine = R_.template triangularView<Eigen::Upper>().solve(rhs);
    return t;
  }

  void ensure_eigen() const {
    if (evals_.size() == B_.rows()) return;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(B_);
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
  }

  Matrix<Scalar> sites_, K_, Q1_, Q2_, B_;
  Matrix<Scalar> R_;
  mutable Vector<Scalar> evals_;
  mutable Matrix<Scalar> evecs_;
};

// Log-spaced penalties from 1e-6 to 1e2, four per decade.
inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int e = -24; e <= 8; ++e) g.push_back(std::pow(10.0, e / 4.0));
  return g;
}

}  // namespace medrep

#endif  // MEDREP_TPS_HPP_
