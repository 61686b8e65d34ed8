#pragma once

#include "rmgms/common.hpp"

#include <memory>
#include <string>
#include <vector>

namespace rmgms {

enum class PolyFamily { Legendre, Hermite };

std::string to_string(PolyFamily f);
PolyFamily poly_family_from_string(const std::string& s);

// One-dimensional orthonormal polynomials: Legendre for the uniform law on
// (-1,1), probabilists' Hermite for N(0,1). Returns values of degrees 0..n.
Vec orthonormal_poly_1d(PolyFamily f, int n, double x);

// Gauss rule for the family's probability weight (nodes, weights summing to 1).
std::pair<Vec, Vec> gauss_rule(PolyFamily f, int npts);

std::uint64_t binomial(int n, int k);

// Total-degree tensor basis. Multi-indices are ordered by total degree and
// then lexicographically (first coordinate most significant, ascending).
class PolynomialBasis {
 public:
  PolynomialBasis() = default;
  PolynomialBasis(PolyFamily family, int p, int degree);

  PolyFamily family() const { return family_; }
  int dim() const { return p_; }
  int degree() const { return degree_; }
  int size() const { return static_cast<int>(index_.size()); }
  std::vector<int> multi_index(int i) const;

  Vec eval(const Vec& mu) const;
  // Values of the selected members only.
  Vec eval(const Vec& mu, const std::vector<int>& members) const;
  // Rows are samples (mu rows), columns basis members.
  Mat eval_many(const Mat& mus) const;

 private:
  void tables(const Vec& mu, Mat& t) const;
  double member(const Mat& t, int i) const;

  PolyFamily family_ = PolyFamily::Legendre;
  int p_ = 0, degree_ = 0;
  // Sparse form of each multi-index: (coordinate, degree) with degree > 0.
  std::vector<std::vector<std::pair<int, int>>> index_;
};

// Method of snapshots on mean-removed data. Columns of `snapshots` are
// samples; `weights` is the diagonal of the spatial inner product.
struct SnapshotKLE {
  Vec mean;
  Vec eigenvalues;  // all of them, descending, clamped at 0
  Mat modes;        // retained modes, orthonormal in the weighted product
  Mat zeta;         // n_t x M training coefficients
  int retained = 0;
};

struct TruncationRule {
  double tail_tol = -1.0;  // tail-energy ratio bound, used when >= 0
  int count = -1;          // fixed count, used when >= 0
};

SnapshotKLE snapshot_kle(const Mat& snapshots, const Vec& weights, TruncationRule rule);

// Non-centered POD modes of `snapshots`; returns up to n modes.
struct PodModes {
  Mat modes;
  Vec eigenvalues;
};
PodModes pod_modes(const Mat& snapshots, const Vec& weights, int n);

struct SeparatedRep {
  Vec mean;
  Mat modes;       // n_x x M
  Vec sqrt_lambda; // M
  Mat coeffs;      // M_g x M regression coefficients of zeta_i
  PolynomialBasis basis;
  int n_t = 0;

  int terms() const { return static_cast<int>(modes.cols()); }
  Vec eval(const Vec& mu) const;
  SeparatedRep truncated(int M) const;
};

SeparatedRep lsmos(const Mat& snapshots, const Vec& weights, const Mat& params,
                   const PolynomialBasis& basis, TruncationRule rule);

// Dictionary accessed through products only, so tensor dictionaries need not
// be formed.
class Dictionary {
 public:
  virtual ~Dictionary() = default;
  virtual int rows() const = 0;
  virtual int cols() const = 0;
  virtual Vec column(int j) const = 0;
  virtual Vec correlate(const Vec& r) const = 0;  // Pi^T r
  virtual Vec column_norms() const = 0;
};

class DenseDictionary : public Dictionary {
 public:
  explicit DenseDictionary(Mat P) : P_(std::move(P)) {}
  int rows() const override { return static_cast<int>(P_.rows()); }
  int cols() const override { return static_cast<int>(P_.cols()); }
  Vec column(int j) const override { return P_.col(j); }
  Vec correlate(const Vec& r) const override { return P_.transpose() * r; }
  Vec column_norms() const override { return P_.colwise().norm().transpose(); }

 private:
  Mat P_;
};

// Columns p_{i1}(mu) g_{i2}(x) on a full design: row = j_mu * n_x + i_x,
// column = i1 * N + i2 for N spatial modes.
class TensorDictionary : public Dictionary {
 public:
  TensorDictionary(Mat G, Mat P) : G_(std::move(G)), P_(std::move(P)) {}
  int rows() const override { return static_cast<int>(G_.rows() * P_.rows()); }
  int cols() const override { return static_cast<int>(G_.cols() * P_.cols()); }
  int modes() const { return static_cast<int>(G_.cols()); }
  Vec column(int j) const override;
  Vec correlate(const Vec& r) const override;
  Vec column_norms() const override;

 private:
  Mat G_;  // n_x x N
  Mat P_;  // n_mu x M_g
};

struct OmpResult {
  std::vector<int> support;
  Vec coefficients;  // aligned with support, in original column scaling
  double relative_residual = 1.0;
  std::vector<double> residual_history;
  bool converged = false;
};

OmpResult omp(const Dictionary& dict, const Vec& b, double eps, int max_terms = -1);

struct TensorTerm {
  int poly = 0;
  int mode = 0;
  double c = 0.0;
};

struct SparseTensorRep {
  Mat modes;  // n_x x N
  PolynomialBasis basis;
  std::vector<TensorTerm> terms;
  double residual = 0.0;

  int Mt() const { return static_cast<int>(terms.size()); }
  Vec eval(const Vec& mu) const;
  double eval_point(int x, const Vec& mu) const;
};

struct SampleDesign {
  std::vector<int> points;   // spatial (or space-time) row indices
  std::vector<int> samples;  // snapshot columns used as parameter samples
};

SampleDesign random_design(int n_x, int n_points, int n_t, int n_samples, Rng& rng);

SparseTensorRep staomp(const Mat& snapshots, const Vec& weights, const Mat& params, int n_modes,
                       const PolynomialBasis& basis, const SampleDesign& design, double eps,
                       int max_terms = -1);

// Same, with spatial modes already computed.
SparseTensorRep staomp_with_modes(const Mat& snapshots, const Mat& modes, const Mat& params,
                                  const PolynomialBasis& basis, const SampleDesign& design,
                                  double eps, int max_terms = -1);

}  // namespace rmgms
