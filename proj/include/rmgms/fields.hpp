#pragma once

#include "rmgms/common.hpp"
#include "rmgms/grid.hpp"
#include "rmgms/separation.hpp"

#include <functional>
#include <memory>
#include <string>

namespace rmgms {

// Cell values, row-major from y = 0 (index j*nx + i matches cell numbering).
struct RasterField {
  int nx = 0, ny = 0;
  Vec values;
  double min() const { return values.minCoeff(); }
  double max() const { return values.maxCoeff(); }
};

RasterField load_raster(const std::string& path, bool require_positive = true);
void write_raster(const std::string& path, const RasterField& f);
void write_raster(const std::string& path, int nx, int ny, const Vec& values);

// Background 1 with meandering channels and rectangular inclusions at
// `contrast`; deterministic per seed.
RasterField generate_channel_field(int nx, int ny, double contrast, std::uint64_t seed);

enum class ParamLaw { Uniform, Normal };

struct KLEField {
  double mean = 0.0, sigma2 = 0.0, lx = 0.0, ly = 0.0;
  ParamLaw law = ParamLaw::Uniform;
  Vec eigenvalues;  // descending
  Mat modes;        // cells x N, L2(D)-orthonormal
  int terms() const { return static_cast<int>(eigenvalues.size()); }
  Vec eval(const Vec& mu) const;
};

// Gaussian covariance sigma2 exp(-dx^2/(2 lx^2) - dy^2/(2 ly^2)) collocated at
// cell midpoints. The kernel factorizes, so the discrete operator is the
// Kronecker product of two 1-D operators and its eigenpairs are products.
KLEField kle_build(const GridHierarchy& g, double sigma2, double lx, double ly, int N, double mean,
                   ParamLaw law = ParamLaw::Uniform);

enum class ModelTag { Example1, Example2, TwoPhase, Custom };
std::string to_string(ModelTag t);

class ParametricCoefficient {
 public:
  using KFunction = std::function<Vec(const Vec& mu)>;

  static ParametricCoefficient example1(const GridHierarchy& g, const RasterField& kappa1);
  static ParametricCoefficient example2(const GridHierarchy& g, const RasterField& kappa1, KLEField a);
  static ParametricCoefficient twophase(const GridHierarchy& g, const RasterField& kappa2, KLEField a);
  static ParametricCoefficient custom(int p, ParamLaw law, KFunction k);

  ModelTag tag() const { return tag_; }
  int dim() const { return p_; }
  ParamLaw law() const { return law_; }
  Vec eval_k(const Vec& mu) const;     // throws ModelError on nonpositive cells
  Vec eval_kinv(const Vec& mu) const;  // cellwise 1/k
  Mat sample(int n, Rng& rng) const;   // one parameter per row

 private:
  ModelTag tag_ = ModelTag::Custom;
  int p_ = 1;
  ParamLaw law_ = ParamLaw::Uniform;
  KFunction k_;
};

// k^{-1}(x, mu) ~ sum_q k^q(mu) kappa^q(x).
struct AffineTerm {
  Vec field;                               // kappa^q, cellwise
  std::vector<std::pair<int, double>> poly; // k^q as sparse polynomial expansion
};

class AffineDecomposition {
 public:
  AffineDecomposition() = default;
  AffineDecomposition(PolynomialBasis basis, std::vector<AffineTerm> terms, double achieved)
      : basis_(std::move(basis)), terms_(std::move(terms)), achieved_(achieved) {}

  int size() const { return static_cast<int>(terms_.size()); }
  int cells() const { return terms_.empty() ? 0 : static_cast<int>(terms_[0].field.size()); }
  Vec coefficients(const Vec& mu) const;  // k^q(mu)
  Vec kinv(const Vec& mu) const;
  Vec kinv_from(const Vec& theta) const;  // sum theta_q kappa^q
  const AffineTerm& term(int q) const { return terms_[q]; }
  const PolynomialBasis& basis() const { return basis_; }
  double achieved_tolerance() const { return achieved_; }
  // Parameter-independent decomposition with a single term k^1 = 1.
  static AffineDecomposition constant(const Vec& kinv, int p = 1);

 private:
  PolynomialBasis basis_;
  std::vector<AffineTerm> terms_;
  double achieved_ = 0.0;
};

struct AffineError : ModelError {
  AffineError(const std::string& what, double best) : ModelError(what), best_error(best) {}
  double best_error;
};

struct AffineOptions {
  double tol = 1e-4;        // cellwise relative error bound on the training set
  int max_terms = 60;
  int degree = 4;
  PolyFamily family = PolyFamily::Legendre;
};

AffineDecomposition affine_decompose(const ParametricCoefficient& c, const Mat& trainset,
                                     const AffineOptions& opt);

// Max over cells and samples of |approx - exact| / |exact|.
double affine_max_relative_error(const AffineDecomposition& ad, const ParametricCoefficient& c,
                                 const Mat& samples);

}  // namespace rmgms
