#pragma once

#include "rmgms/common.hpp"

#include <Eigen/SparseLU>

#include <functional>
#include <memory>
#include <vector>

namespace rmgms {

// Generic saddle form  A v + B^T p = f1,  B v = f2.
// With a pressure nullspace the constraint w^T p = 0 is added through a
// Lagrange row (w defaults to ones); f2 must then be compatible.
struct SaddleSystem {
  SpMat A;
  SpMat B;
  Vec f1, f2;
  bool pressure_nullspace = false;
  Vec pressure_weights;
};

struct SaddleSolution {
  Vec v, p;
  double residual_v = 0.0, residual_p = 0.0;
};

// Factorizes the KKT matrix once; reusable for many right-hand sides.
class SaddleFactorization {
 public:
  SaddleFactorization(const SpMat& A, const SpMat& B, bool pressure_nullspace,
                      const Vec& pressure_weights = Vec());
  SaddleSolution solve(const Vec& f1, const Vec& f2, double tol = 1e-10) const;
  int nv() const { return nv_; }
  int np() const { return np_; }

 private:
  int nv_, np_;
  bool nullspace_;
  Vec weights_;
  SpMat A_, B_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

SaddleSolution solve_saddle(const SaddleSystem& s, double tol = 1e-10);

// Dense variant for reduced systems: Cholesky of A and a pivoted Schur
// complement. Throws NumericalFailure on a rank-deficient system.
SaddleSolution solve_saddle_dense(const Mat& A, const Mat& B, const Vec& f1, const Vec& f2,
                                  bool pressure_nullspace, const Vec& pressure_weights = Vec(),
                                  double tol = 1e-10);

struct EigenPairs {
  Vec values;    // ascending
  Mat vectors;   // S-orthonormal columns
};

// M z = lambda S z. S empty means identity.
EigenPairs sym_eig(const Mat& M, const Mat& S = Mat());

// Minimum-norm least-squares solution; F may have several columns.
Mat least_squares(const Mat& A, const Mat& F);
Vec least_squares(const Mat& A, const Vec& F);

// Inner product given by an SPD operator; identity when unset.
struct InnerProduct {
  std::function<Vec(const Vec&)> apply;
  static InnerProduct euclidean();
  static InnerProduct gram(const SpMat& G);  // G must outlive the result
  double dot(const Vec& a, const Vec& b) const { return a.dot(apply(b)); }
};

// Orthonormal set that can be extended incrementally. Columns of H are the
// inner-product images G q, so coefficients of a vector w are H^T w.
class OrthonormalBasis {
 public:
  OrthonormalBasis(int n, InnerProduct ip) : n_(n), ip_(std::move(ip)), Q_(n, 0), H_(n, 0) {}
  // Adds the components of w orthogonal to the current span; returns false
  // (and adds nothing) when the remainder is below drop_tol * |w|.
  bool add(const Vec& w, double drop_tol = 1e-10);
  // Adds columns in order; returns the indices of the accepted ones.
  std::vector<int> add_columns(const Mat& W, double drop_tol = 1e-10);
  const Mat& Q() const { return Q_; }
  const Mat& images() const { return H_; }
  int size() const { return static_cast<int>(Q_.cols()); }
  int dim() const { return n_; }
  const InnerProduct& inner_product() const { return ip_; }

 private:
  int n_;
  InnerProduct ip_;
  Mat Q_, H_;
};

struct GramSchmidtResult {
  Mat Q;
  std::vector<int> kept;  // input column for each output column
  int dropped = 0;
};

GramSchmidtResult gram_schmidt(const Mat& vectors, const InnerProduct& ip = InnerProduct::euclidean(),
                               double drop_tol = 1e-10);

}  // namespace rmgms
