#pragma once

#include "rmgms/common.hpp"
#include "rmgms/fields.hpp"
#include "rmgms/gmsfem.hpp"
#include "rmgms/mixedfem.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <string>
#include <vector>

namespace rmgms {

// Parameter-independent data shared by every reduced construction: the fine
// spaces with their problem data, the affine split of k^{-1} and its fine
// mass blocks, and the coarse pressure space.
class ReducedContext {
 public:
  ReducedContext(const FineSpaces& s, AffineDecomposition ad, int local_basis);

  const FineSpaces& spaces() const { return *s_; }
  const GridHierarchy& grid() const { return s_->grid(); }
  const AffineDecomposition& affine() const { return ad_; }
  const std::vector<SpMat>& mass_blocks() const { return M_; }
  const SpMat& pressure() const { return P_; }
  const Vec& block_areas() const { return wblk_; }
  int local_basis() const { return l_; }
  // Coarse edges that carry velocity basis functions (interior ones).
  const std::vector<int>& edges() const { return edges_; }

  FineSolution fine(const Vec& mu) const;
  // Factorization of the V Gram matrix on interior fine edges.
  const Eigen::SimplicialLDLT<SpMat>& gram_interior() const;

 private:
  const FineSpaces* s_;
  AffineDecomposition ad_;
  int l_;
  std::vector<SpMat> M_;
  SpMat P_;
  Vec wblk_;
  std::vector<int> edges_;
  mutable std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> gram_;
};

// GMsFE basis vectors of every selected parameter, collected per coarse edge.
// Column n of each edge belongs to group n; groups hold one vector per edge.
struct SnapshotLibrary {
  std::vector<Vec> mus;
  std::vector<int> edges;               // coarse edge ids
  std::vector<LocalVectors> per_edge;   // columns ordered by parameter, then eigenvalue
  int n_snap(int k) const { return per_edge[k].count(); }
  int min_snap() const;
  int num_groups() const { return min_snap(); }
  // Library vector (edge k, column n) on all fine edges.
  SpMat group(int n, int n_edges) const;
};

SnapshotLibrary build_library(const ReducedContext& ctx, const std::vector<Vec>& mus);
void extend_library(SnapshotLibrary& lib, const ReducedContext& ctx, const Vec& mu);

enum class BasisKind { BOCV, POD, Custom };
std::string to_string(BasisKind k);
BasisKind basis_kind_from_string(const std::string& s);

// Reduced velocity space. X holds linearly independent local vectors and
// Z = X T is their V-orthonormalization; both span the same space.
struct ReducedSpace {
  BasisKind kind = BasisKind::Custom;
  SpMat X;
  Mat T;
  Mat Z;
  SpMat P;                   // coarse pressure injection
  std::vector<Mat> MN;       // Z^T M^q Z
  Mat BN;                    // P^T B Z
  Vec FN;                    // P^T (F - B vg)
  std::vector<Vec> MG;       // Z^T M^q vg
  Vec vg;                    // fixed lift carrying the boundary flux
  Vec block_areas;
  int size() const { return static_cast<int>(Z.cols()); }
  int num_blocks() const { return static_cast<int>(P.cols()); }
};

// Orthonormalizes the columns of X in (.,.)_V (dependent ones dropped) and
// assembles the reduced blocks.
ReducedSpace make_reduced_space(const ReducedContext& ctx, const SpMat& X, BasisKind kind,
                                double drop_tol = 1e-8);

struct ReducedSolution {
  Vec v;   // coefficients on Z
  Vec p;   // coarse block pressures
  Vec mu;
};

ReducedSolution reduced_solve(const ReducedSpace& rs, const AffineDecomposition& ad, const Vec& mu,
                              double tol = 1e-9);
// Same system assembled from a cellwise k^{-1} on the fine grid.
ReducedSolution reduced_solve_kinv(const ReducedSpace& rs, const FineSpaces& s, const Vec& kinv,
                                   double tol = 1e-9);

struct FineFields {
  Vec v, p;
};
FineFields reconstruct(const ReducedSpace& rs, const ReducedSolution& sol);
// Z coefficients of the V-orthogonal projection of a fine velocity.
Vec project(const ReducedSpace& rs, const FineSpaces& s, const Vec& v);

struct ErrorPair {
  double velocity = 0.0, pressure = 0.0;
};
// Mean of per-sample relative L2 errors; zero-norm references are skipped.
ErrorPair relative_errors(const FineSpaces& s, const std::vector<FineFields>& reference,
                          const std::vector<FineFields>& approx);

// Constants for the a posteriori bound: alpha_LB = min k^{-1} c_V,
// gamma_UB = max k^{-1} C_V, and the inf-sup constant of b.
struct StabilityConstants {
  double c_V = 0.0, C_V = 1.0, beta = 0.0;
  bool exact = false;  // dense eigensolves rather than bounds
};
StabilityConstants stability_constants(const FineSpaces& s, int dense_limit = 1500);

struct ErrorBounds {
  double velocity = 0.0, pressure = 0.0;
};
ErrorBounds error_bounds(double res_v, double res_p, double alpha, double gamma, double beta);

struct ResidualNorms {
  double v = 0.0, p = 0.0;
};

enum class EstimatorMode { Auto, Cached, Direct };

// Dual norms of the reduced residual against the fine problem, evaluated
// either from cached Riesz inner-product tables or by a fine Riesz solve.
class ErrorEstimator {
 public:
  ErrorEstimator(const ReducedContext& ctx, const ReducedSpace& rs, StabilityConstants sc,
                 EstimatorMode mode = EstimatorMode::Auto, double table_budget = 4e9);
  ResidualNorms residuals(const ReducedSolution& sol) const;
  ResidualNorms residuals_direct(const ReducedSolution& sol) const;
  ErrorBounds estimate(const ReducedSolution& sol) const;
  bool cached() const { return cached_; }
  const StabilityConstants& constants() const { return sc_; }

 private:
  const ReducedContext* ctx_;
  const ReducedSpace* rs_;
  StabilityConstants sc_;
  bool cached_ = false;
  Mat Tv_;      // tables over [L_i^q (q major), X^r]
  double CC_ = 0.0;
  Vec CX_;
  Mat XX_;
};

struct GreedyOptions {
  int n_p = 5;          // POD size per edge
  int max_size = 10;    // cap on |Xi_op|
  int first = 0;        // index of mu_1 in the training set
  EstimatorMode mode = EstimatorMode::Auto;
};

struct GreedyResult {
  std::vector<int> selected;    // rows of the training matrix
  std::vector<double> eps;      // max estimator per iteration
};

GreedyResult greedy_select(const ReducedContext& ctx, const Mat& train, const GreedyOptions& opt,
                           const StabilityConstants& sc);

struct BocvOptions {
  double eps_star = 0.0;   // stop once the selected validation error drops to this
  int max_groups = -1;
};

struct BocvResult {
  ReducedSpace space;
  std::vector<int> groups;         // selection order
  std::vector<double> mean_error;  // validation mean V-norm error after each round
};

BocvResult bocv_build(const ReducedContext& ctx, const SnapshotLibrary& lib,
                      const std::vector<FineSolution>& validation, const BocvOptions& opt);

struct PodResult {
  ReducedSpace space;
  std::vector<Vec> eigenvalues;    // per edge, descending, all of them
  std::vector<int> modes;          // retained per edge
};

PodResult pod_build(const ReducedContext& ctx, const SnapshotLibrary& lib, int m_p);

}  // namespace rmgms
