#include "rmgms/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include <sstream>

namespace rmgms {

namespace {

std::string residual_report(double rv, double rp, double scale) {
  std::ostringstream os;
  os << "residuals |r_v|=" << rv << " |r_p|=" << rp << " (rhs scale " << scale << ")";
  return os.str();
}

}  // namespace

SaddleFactorization::SaddleFactorization(const SpMat& A, const SpMat& B, bool pressure_nullspace,
                                         const Vec& pressure_weights)
    : nv_(static_cast<int>(A.rows())), np_(static_cast<int>(B.rows())),
      nullspace_(pressure_nullspace), A_(A), B_(B) {
  if (A.cols() != nv_ || B.cols() != nv_)
    throw ConfigError("saddle blocks have mismatched dimensions");
  weights_ = pressure_weights.size() == np_ ? pressure_weights : Vec::Ones(np_);
  const int n = nv_ + np_ + (nullspace_ ? 1 : 0);
  std::vector<Triplet> t;
  t.reserve(A.nonZeros() + 2 * B.nonZeros() + 2 * np_);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it(B, k); it; ++it) {
      t.emplace_back(nv_ + it.row(), it.col(), it.value());
      t.emplace_back(it.col(), nv_ + it.row(), it.value());
    }
  if (nullspace_)
    for (int r = 0; r < np_; ++r) {
      t.emplace_back(nv_ + r, nv_ + np_, weights_[r]);
      t.emplace_back(nv_ + np_, nv_ + r, weights_[r]);
    }
  SpMat K(n, n);
  K.setFromTriplets(t.begin(), t.end());
  K.makeCompressed();
  lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
  lu_->compute(K);
  if (lu_->info() != Eigen::Success)
    throw NumericalFailure("saddle factorization failed: " + lu_->lastErrorMessage());
}

SaddleSolution SaddleFactorization::solve(const Vec& f1, const Vec& f2, double tol) const {
  const int n = nv_ + np_ + (nullspace_ ? 1 : 0);
  Vec rhs = Vec::Zero(n);
  rhs.head(nv_) = f1;
  rhs.segment(nv_, np_) = f2;
  const Vec x = lu_->solve(rhs);
  SaddleSolution s;
  s.v = x.head(nv_);
  s.p = x.segment(nv_, np_);
  s.residual_v = (A_ * s.v + B_.transpose() * s.p - f1).norm();
  s.residual_p = (B_ * s.v - f2).norm();
  const double scale = 1.0 + std::sqrt(f1.squaredNorm() + f2.squaredNorm());
  if (!x.allFinite() || s.residual_v > tol * scale || s.residual_p > tol * scale)
    throw NumericalFailure("saddle solve inaccurate or singular: " +
                           residual_report(s.residual_v, s.residual_p, scale));
  return s;
}

SaddleSolution solve_saddle(const SaddleSystem& s, double tol) {
  SaddleFactorization f(s.A, s.B, s.pressure_nullspace, s.pressure_weights);
  return f.solve(s.f1, s.f2, tol);
}

SaddleSolution solve_saddle_dense(const Mat& A, const Mat& B, const Vec& f1, const Vec& f2,
                                  bool pressure_nullspace, const Vec& pressure_weights,
                                  double tol) {
  const Eigen::Index nv = A.rows(), np = B.rows();
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) throw NumericalFailure("reduced velocity block is not SPD");
  const Mat Y = llt.solve(B.transpose());
  const Vec a1 = llt.solve(f1);
  const Eigen::Index m = np + (pressure_nullspace ? 1 : 0);
  Mat S = Mat::Zero(m, m);
  S.topLeftCorner(np, np) = B * Y;
  Vec r = Vec::Zero(m);
  r.head(np) = B * a1 - f2;
  if (pressure_nullspace) {
    const Vec w = pressure_weights.size() == np ? pressure_weights : Vec::Ones(np);
    S.block(0, np, np, 1) = w;
    S.block(np, 0, 1, np) = w.transpose();
  }
  Eigen::FullPivLU<Mat> lu(S);
  if (lu.rank() < m) {
    std::ostringstream os;
    os << "reduced saddle system is singular: rank " << lu.rank() << " of " << m
       << ", pivot ratio " << (lu.maxPivot() > 0 ? std::abs(lu.matrixLU()(m - 1, m - 1)) / lu.maxPivot() : 0.0);
    throw NumericalFailure(os.str());
  }
  const Vec x = lu.solve(r);
  SaddleSolution s;
  s.p = x.head(np);
  s.v = a1 - Y * s.p;
  s.residual_v = (A * s.v + B.transpose() * s.p - f1).norm();
  s.residual_p = (B * s.v - f2).norm();
  // Backward-error scale: data plus the size of the terms that cancel.
  const double bn = B.norm();
  const double scale = 1.0 + std::sqrt(f1.squaredNorm() + f2.squaredNorm()) + A.norm() * s.v.norm() +
                       bn * (s.p.norm() + s.v.norm());
  if (!s.v.allFinite() || s.residual_v > tol * scale || s.residual_p > tol * scale)
    throw NumericalFailure("reduced saddle solve inaccurate: " +
                           residual_report(s.residual_v, s.residual_p, scale));
  (void)nv;
  return s;
}

EigenPairs sym_eig(const Mat& M, const Mat& S) {
  EigenPairs out;
  if (S.size() == 0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    if (es.info() != Eigen::Success) throw NumericalFailure("symmetric eigensolve failed");
    out.values = es.eigenvalues();
    out.vectors = es.eigenvectors();
    return out;
  }
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalFailure("generalized eigensolve: S is not SPD");
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(M, S, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw NumericalFailure("generalized eigensolve failed");
  out.values = es.eigenvalues();
  out.vectors = es.eigenvectors();
  return out;
}

Mat least_squares(const Mat& A, const Mat& F) {
  if (A.size() == 0) throw ConfigError("least squares on an empty matrix");
  if (F.rows() != A.rows()) throw ConfigError("least squares: row mismatch");
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
  return cod.solve(F);
}

Vec least_squares(const Mat& A, const Vec& F) {
  return least_squares(A, Mat(F)).col(0);
}

InnerProduct InnerProduct::euclidean() {
  return {[](const Vec& v) { return v; }};
}

InnerProduct InnerProduct::gram(const SpMat& G) {
  const SpMat* g = &G;
  return {[g](const Vec& v) -> Vec { return *g * v; }};
}

bool OrthonormalBasis::add(const Vec& w, double drop_tol) {
  Vec u = w;
  const double n0 = std::sqrt(std::max(ip_.dot(w, w), 0.0));
  if (n0 == 0.0) return false;
  // Two projection passes keep the set orthonormal to rounding.
  for (int pass = 0; pass < 2 && size() > 0; ++pass) u -= Q_ * (H_.transpose() * u);
  Vec gu = ip_.apply(u);
  const double nu = std::sqrt(std::max(u.dot(gu), 0.0));
  if (nu < drop_tol * n0) return false;
  Q_.conservativeResize(Eigen::NoChange, size() + 1);
  H_.conservativeResize(Eigen::NoChange, H_.cols() + 1);
  Q_.col(Q_.cols() - 1) = u / nu;
  H_.col(H_.cols() - 1) = gu / nu;
  return true;
}

std::vector<int> OrthonormalBasis::add_columns(const Mat& W, double drop_tol) {
  std::vector<int> kept;
  for (int j = 0; j < W.cols(); ++j)
    if (add(W.col(j), drop_tol)) kept.push_back(j);
  return kept;
}

GramSchmidtResult gram_schmidt(const Mat& vectors, const InnerProduct& ip, double drop_tol) {
  OrthonormalBasis basis(static_cast<int>(vectors.rows()), ip);
  GramSchmidtResult r;
  r.kept = basis.add_columns(vectors, drop_tol);
  r.dropped = static_cast<int>(vectors.cols()) - static_cast<int>(r.kept.size());
  r.Q = basis.Q();
  return r;
}

}  // namespace rmgms
