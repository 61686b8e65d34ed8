#pragma once

#include "rmgms/common.hpp"
#include "rmgms/fields.hpp"
#include "rmgms/grid.hpp"

#include <functional>
#include <vector>

namespace rmgms {

// Lowest-order Raviart-Thomas velocity (one DOF per fine edge: the normal
// velocity along the positive axis) and piecewise-constant pressure.
// Problem data: cell integrals of the source and the outward normal flux
// v.n on boundary edges.
class FineSpaces {
 public:
  explicit FineSpaces(const GridHierarchy& g);

  const GridHierarchy& grid() const { return *g_; }
  int num_edges() const { return g_->num_edges(); }
  int num_cells() const { return g_->num_cells(); }

  // Divergence pairing (B v)_c = sum of outward fluxes of cell c.
  const SpMat& B() const { return B_; }
  const SpMat& mass_l2() const { return M1_; }
  const SpMat& gram_v() const { return GV_; }  // L2 + div Gram
  const Vec& areas() const { return W_; }
  // RT0 mass matrix with cellwise constant weight.
  SpMat mass(const Vec& cell_weight) const;

  const std::vector<int>& interior_edges() const { return interior_; }
  const std::vector<int>& boundary_edges() const { return boundary_; }
  // Position of an edge in interior_edges(), or -1.
  int interior_index(int e) const { return interior_pos_[e]; }
  const SpMat& interior_selector() const { return PI_; }  // n_edges x n_interior

  void set_source(const std::function<double(double, double)>& f);  // midpoint rule
  void set_source_integrals(const Vec& F);
  // Outward normal flux density on each boundary edge (entries for interior
  // edges are ignored).
  void set_boundary_flux(const Vec& g_out);
  const Vec& F() const { return F_; }
  // DOF values on boundary edges implied by the boundary flux; zero elsewhere.
  const Vec& boundary_values() const { return vb_; }
  bool has_boundary_flux() const { return vb_.cwiseAbs().maxCoeff() > 0.0; }

 private:
  const GridHierarchy* g_;
  SpMat B_, M1_, GV_, PI_;
  Vec W_, F_, vb_;
  std::vector<int> interior_, boundary_, interior_pos_;
  // Mass-pattern bookkeeping: for each cell the 8 value slots it touches.
  SpMat pattern_;
  std::vector<std::array<int, 8>> slots_;
};

struct FineSolution {
  Vec v;  // edge DOFs
  Vec p;  // cell pressures, zero mean
  Vec mu;
};

struct AffineFineBlocks {
  std::vector<SpMat> M;
  SpMat B;
  Vec F;
};

AffineFineBlocks assemble_affine(const FineSpaces& s, const AffineDecomposition& ad);

// Solve with a given cellwise k^{-1}.
FineSolution solve_fine_kinv(const FineSpaces& s, const Vec& kinv, double tol = 1e-10);
FineSolution solve_fine(const FineSpaces& s, const AffineDecomposition& ad, const Vec& mu,
                        double tol = 1e-10);

double local_conservation_residual(const FineSpaces& s, const Vec& v);
double l2_norm(const FineSpaces& s, const Vec& v);
double hdiv_norm(const FineSpaces& s, const Vec& v);
double pressure_l2_norm(const FineSpaces& s, const Vec& p);

}  // namespace rmgms
