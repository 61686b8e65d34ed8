#pragma once

#include "rmgms/common.hpp"
#include "rmgms/fields.hpp"
#include "rmgms/grid.hpp"
#include "rmgms/linalg.hpp"
#include "rmgms/mixedfem.hpp"

#include <memory>
#include <vector>

namespace rmgms {

// Vectors supported on a coarse neighborhood, stored over its fine edges.
struct LocalVectors {
  std::vector<int> dofs;  // global fine edge ids, sorted
  Mat values;             // dofs.size() x count
  int count() const { return static_cast<int>(values.cols()); }
  Mat global(int n_edges) const;
};

struct EdgeSnapshotSet {
  int edge = 0;
  Vec mu;
  LocalVectors snapshots;  // one column per fine edge of E_i
};

struct LocalSpectralBasis {
  int edge = 0;
  Vec mu;
  LocalVectors basis;  // s_i-orthonormal eigenfunctions
  Vec eigenvalues;     // ascending
};

// Local snapshot and spectral computations for one coefficient k^{-1}.
// Block factorizations are built lazily and reused across edges.
class LocalSolver {
 public:
  LocalSolver(const GridHierarchy& g, Vec kinv);
  ~LocalSolver();
  LocalSolver(LocalSolver&&) noexcept;

  EdgeSnapshotSet edge_snapshots(int i) const;
  LocalSpectralBasis spectral_reduce(const EdgeSnapshotSet& snap, int l) const;
  // a_i and s_i Gram matrices of arbitrary neighborhood vectors.
  void spectral_forms(int i, const LocalVectors& y, Mat& a, Mat& s) const;
  const Vec& kinv() const { return kinv_; }

 private:
  struct Block;
  const Block& block(int b) const;
  const GridHierarchy* g_;
  Vec kinv_;
  mutable std::vector<std::unique_ptr<Block>> blocks_;
};

EdgeSnapshotSet edge_snapshots(const GridHierarchy& g, const AffineDecomposition& ad, const Vec& mu, int i);

struct OfflineSpace {
  Vec mu;
  std::vector<LocalSpectralBasis> edges;  // every coarse edge, grid order
  SpMat pressure;                         // fine cells x coarse blocks
  int n_off() const;
};

OfflineSpace offline_space(const GridHierarchy& g, const Vec& kinv, int l);
OfflineSpace offline_space(const GridHierarchy& g, const AffineDecomposition& ad, const Vec& mu, int l);

// Piecewise-constant injection of coarse blocks into fine cells.
SpMat coarse_pressure_injection(const GridHierarchy& g);

// Galerkin trial space: velocity columns vanish on the domain boundary;
// lift columns carry the boundary flux; pressure maps coefficients to cells.
struct MixedSubspace {
  Mat velocity;
  Mat lift;
  SpMat pressure;
};

MixedSubspace subspace_from(const OfflineSpace& off, const GridHierarchy& g, bool with_lift);
// The fine RT0 space itself, for consistency tests.
MixedSubspace full_fine_subspace(const FineSpaces& s);

struct CoarseSolution {
  Vec vc, pc;  // coefficients
  Vec v, p;    // fine fields
};

CoarseSolution coarse_solve(const MixedSubspace& sub, const FineSpaces& s, const Vec& kinv,
                            double tol = 1e-9);

// Boundary lift reproducing the L2 projection of the boundary flux onto the
// lift traces.
Vec boundary_lift(const MixedSubspace& sub, const FineSpaces& s);

}  // namespace rmgms
