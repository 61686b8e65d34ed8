#include "rmgms/gmsfem.hpp"

#include <algorithm>
#include <cmath>

namespace rmgms {

namespace {

int local_index(const std::vector<int>& sorted, int e) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), e);
  return (it != sorted.end() && *it == e) ? static_cast<int>(it - sorted.begin()) : -1;
}

// k^{-1}-weighted mass plus div Gram over the given cells, on local dofs.
SpMat neighborhood_gram(const GridHierarchy& g, const std::vector<int>& cells,
                        const std::vector<int>& dofs, const Vec& kinv, bool with_div) {
  std::vector<Triplet> t;
  const double a = g.cell_area();
  const double len[4] = {-g.hy(), g.hy(), -g.hx(), g.hx()};
  for (int c : cells) {
    const auto e = g.cell_edges(c);
    int l[4];
    for (int k = 0; k < 4; ++k) l[k] = local_index(dofs, e[k]);
    const double w = kinv[c];
    for (int pair = 0; pair < 2; ++pair) {
      const int p0 = l[2 * pair], p1 = l[2 * pair + 1];
      t.emplace_back(p0, p0, w * a / 3.0);
      t.emplace_back(p1, p1, w * a / 3.0);
      t.emplace_back(p0, p1, w * a / 6.0);
      t.emplace_back(p1, p0, w * a / 6.0);
    }
    if (with_div)
      for (int r = 0; r < 4; ++r)
        for (int s = 0; s < 4; ++s) t.emplace_back(l[r], l[s], len[r] * len[s] / a);
  }
  const int n = static_cast<int>(dofs.size());
  SpMat G(n, n);
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

}  // namespace

Mat LocalVectors::global(int n_edges) const {
  Mat G = Mat::Zero(n_edges, values.cols());
  for (std::size_t r = 0; r < dofs.size(); ++r) G.row(dofs[r]) = values.row(r);
  return G;
}

struct LocalSolver::Block {
  std::vector<int> cells, edges;
  std::vector<int> interior, perimeter;  // local edge indices
  std::vector<int> perimeter_pos;        // local edge -> position in perimeter, or -1
  SpMat M_IP, B_P;
  std::unique_ptr<SaddleFactorization> fac;
  Vec areas;
};

LocalSolver::LocalSolver(const GridHierarchy& g, Vec kinv) : g_(&g), kinv_(std::move(kinv)) {
  if (kinv_.size() != g.num_cells()) throw ConfigError("local solver: k^-1 has the wrong length");
  blocks_.resize(g.num_blocks());
}

LocalSolver::~LocalSolver() = default;
LocalSolver::LocalSolver(LocalSolver&&) noexcept = default;

const LocalSolver::Block& LocalSolver::block(int b) const {
  if (blocks_[b]) return *blocks_[b];
  const GridHierarchy& g = *g_;
  auto blk = std::make_unique<Block>();
  blk->cells = g.block_cells(b);
  blk->edges = g.edges_of_blocks({b});
  const int n = static_cast<int>(blk->edges.size());
  blk->perimeter_pos.assign(n, -1);
  for (int k = 0; k < n; ++k) {
    const auto c = g.edge_cells(blk->edges[k]);
    const bool inside0 = c[0] >= 0 && g.block_of_cell(c[0]) == b;
    const bool inside1 = c[1] >= 0 && g.block_of_cell(c[1]) == b;
    if (inside0 && inside1) {
      blk->interior.push_back(k);
    } else {
      blk->perimeter_pos[k] = static_cast<int>(blk->perimeter.size());
      blk->perimeter.push_back(k);
    }
  }
  const SpMat M = neighborhood_gram(g, blk->cells, blk->edges, kinv_, false);
  const int nc = static_cast<int>(blk->cells.size());
  std::vector<Triplet> tb;
  const double len[4] = {-g.hy(), g.hy(), -g.hx(), g.hx()};
  for (int r = 0; r < nc; ++r) {
    const auto e = g.cell_edges(blk->cells[r]);
    for (int k = 0; k < 4; ++k) tb.emplace_back(r, local_index(blk->edges, e[k]), len[k]);
  }
  SpMat B(nc, n);
  B.setFromTriplets(tb.begin(), tb.end());
  auto select = [n](const std::vector<int>& idx) {
    std::vector<Triplet> t;
    for (std::size_t k = 0; k < idx.size(); ++k) t.emplace_back(idx[k], static_cast<int>(k), 1.0);
    SpMat P(n, static_cast<int>(idx.size()));
    P.setFromTriplets(t.begin(), t.end());
    return P;
  };
  const SpMat PI = select(blk->interior), PP = select(blk->perimeter);
  const SpMat A = PI.transpose() * M * PI;
  const SpMat BI = B * PI;
  blk->M_IP = PI.transpose() * M * PP;
  blk->B_P = B * PP;
  blk->areas = Vec::Constant(nc, g.cell_area());
  blk->fac = std::make_unique<SaddleFactorization>(A, BI, true, blk->areas);
  blocks_[b] = std::move(blk);
  return *blocks_[b];
}

EdgeSnapshotSet LocalSolver::edge_snapshots(int i) const {
  const GridHierarchy& g = *g_;
  const CoarseEdge& ce = g.coarse_edges().at(i);
  EdgeSnapshotSet out;
  out.edge = i;
  out.snapshots.dofs = g.edges_of_blocks(ce.blocks);
  out.snapshots.values = Mat::Zero(out.snapshots.dofs.size(), ce.J());
  for (std::size_t bi = 0; bi < ce.blocks.size(); ++bi) {
    const int b = ce.blocks[bi];
    const Block& blk = block(b);
    // The block on the -m side sees E_i as outflow.
    const bool minus_side = ce.boundary ? !ce.block_on_plus_side : bi == 0;
    const double block_area = static_cast<double>(blk.cells.size()) * g.cell_area();
    for (int j = 0; j < ce.J(); ++j) {
      const int ej = ce.fine_edges[j];
      Vec vP = Vec::Zero(blk.perimeter.size());
      vP[blk.perimeter_pos[local_index(blk.edges, ej)]] = 1.0;
      const double alpha = (minus_side ? 1.0 : -1.0) * g.edge_length(ej) / block_area;
      const Vec f1 = -(blk.M_IP * vP);
      const Vec f2 = alpha * blk.areas - blk.B_P * vP;
      const auto sol = blk.fac->solve(f1, f2);
      for (std::size_t k = 0; k < blk.interior.size(); ++k) {
        const int r = local_index(out.snapshots.dofs, blk.edges[blk.interior[k]]);
        out.snapshots.values(r, j) = sol.v[k];
      }
      for (std::size_t k = 0; k < blk.perimeter.size(); ++k) {
        if (vP[k] == 0.0) continue;
        const int r = local_index(out.snapshots.dofs, blk.edges[blk.perimeter[k]]);
        out.snapshots.values(r, j) = vP[k];
      }
    }
  }
  return out;
}

void LocalSolver::spectral_forms(int i, const LocalVectors& y, Mat& a, Mat& s) const {
  const GridHierarchy& g = *g_;
  const CoarseEdge& ce = g.coarse_edges().at(i);
  std::vector<int> cells;
  for (int b : ce.blocks) cells.insert(cells.end(), g.block_cells(b).begin(), g.block_cells(b).end());
  const SpMat S = neighborhood_gram(g, cells, y.dofs, kinv_, true);
  s = y.values.transpose() * (S * y.values);
  s = 0.5 * (s + s.transpose()).eval();
  Vec w = Vec::Zero(y.dofs.size());
  for (int e : ce.fine_edges) {
    const auto c = g.edge_cells(e);
    // Harmonic average of k^-1 across the edge.
    const double kv = c[0] < 0 ? kinv_[c[1]]
                      : c[1] < 0 ? kinv_[c[0]]
                                 : 2.0 / (1.0 / kinv_[c[0]] + 1.0 / kinv_[c[1]]);
    w[local_index(y.dofs, e)] = g.edge_length(e) * kv;
  }
  a = y.values.transpose() * w.asDiagonal() * y.values;
}

LocalSpectralBasis LocalSolver::spectral_reduce(const EdgeSnapshotSet& snap, int l) const {
  const int J = snap.snapshots.count();
  if (l > J || l < 0) throw ConfigError("spectral_reduce: l exceeds the snapshot count");
  Mat a, s;
  spectral_forms(snap.edge, snap.snapshots, a, s);
  // Restrict to the numerical range of s, then solve the standard problem.
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  const Vec& sv = es.eigenvalues();
  const double smax = sv.maxCoeff();
  std::vector<int> keep;
  for (int k = 0; k < J; ++k)
    if (sv[k] > 1e-12 * smax) keep.push_back(k);
  if (static_cast<int>(keep.size()) < J)
    warn("edge " + std::to_string(snap.edge) + ": dropped " + std::to_string(J - keep.size()) +
         " dependent snapshots");
  Mat T(J, keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) T.col(k) = es.eigenvectors().col(keep[k]) / std::sqrt(sv[keep[k]]);
  const auto ep = sym_eig(T.transpose() * a * T);
  const int lk = std::min<int>(l, static_cast<int>(keep.size()));
  LocalSpectralBasis out;
  out.edge = snap.edge;
  out.mu = snap.mu;
  out.basis.dofs = snap.snapshots.dofs;
  out.basis.values = snap.snapshots.values * (T * ep.vectors.leftCols(lk));
  out.eigenvalues = ep.values.head(lk);
  return out;
}

EdgeSnapshotSet edge_snapshots(const GridHierarchy& g, const AffineDecomposition& ad, const Vec& mu, int i) {
  LocalSolver ls(g, ad.kinv(mu));
  auto s = ls.edge_snapshots(i);
  s.mu = mu;
  return s;
}

int OfflineSpace::n_off() const {
  int n = 0;
  for (const auto& e : edges) n += e.basis.count();
  return n;
}

SpMat coarse_pressure_injection(const GridHierarchy& g) {
  std::vector<Triplet> t;
  for (int c = 0; c < g.num_cells(); ++c) t.emplace_back(c, g.block_of_cell(c), 1.0);
  SpMat P(g.num_cells(), g.num_blocks());
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

OfflineSpace offline_space(const GridHierarchy& g, const Vec& kinv, int l) {
  for (const auto& ce : g.coarse_edges())
    if (l > ce.J()) throw ConfigError("l exceeds the fine edges per coarse edge");
  LocalSolver ls(g, kinv);
  OfflineSpace off;
  for (int i = 0; i < g.num_coarse_edges(); ++i) off.edges.push_back(ls.spectral_reduce(ls.edge_snapshots(i), l));
  off.pressure = coarse_pressure_injection(g);
  return off;
}

OfflineSpace offline_space(const GridHierarchy& g, const AffineDecomposition& ad, const Vec& mu, int l) {
  OfflineSpace off = offline_space(g, ad.kinv(mu), l);
  off.mu = mu;
  for (auto& e : off.edges) e.mu = mu;
  return off;
}

MixedSubspace subspace_from(const OfflineSpace& off, const GridHierarchy& g, bool with_lift) {
  MixedSubspace sub;
  int nv = 0, nb = 0;
  for (const auto& e : off.edges) (g.coarse_edges()[e.edge].boundary ? nb : nv) += e.basis.count();
  sub.velocity = Mat::Zero(g.num_edges(), nv);
  sub.lift = Mat::Zero(g.num_edges(), with_lift ? nb : 0);
  int iv = 0, ib = 0;
  for (const auto& e : off.edges) {
    const bool bnd = g.coarse_edges()[e.edge].boundary;
    if (bnd && !with_lift) continue;
    Mat& target = bnd ? sub.lift : sub.velocity;
    int& col = bnd ? ib : iv;
    for (int k = 0; k < e.basis.count(); ++k, ++col)
      for (std::size_t r = 0; r < e.basis.dofs.size(); ++r) target(e.basis.dofs[r], col) = e.basis.values(r, k);
  }
  sub.pressure = off.pressure;
  return sub;
}

MixedSubspace full_fine_subspace(const FineSpaces& s) {
  MixedSubspace sub;
  sub.velocity = Mat(s.interior_selector());
  sub.lift = Mat::Zero(s.num_edges(), s.boundary_edges().size());
  for (std::size_t k = 0; k < s.boundary_edges().size(); ++k) sub.lift(s.boundary_edges()[k], k) = 1.0;
  std::vector<Triplet> t;
  for (int c = 0; c < s.num_cells(); ++c) t.emplace_back(c, c, 1.0);
  sub.pressure.resize(s.num_cells(), s.num_cells());
  sub.pressure.setFromTriplets(t.begin(), t.end());
  return sub;
}

Vec boundary_lift(const MixedSubspace& sub, const FineSpaces& s) {
  const Vec& vb = s.boundary_values();
  if (!s.has_boundary_flux() || sub.lift.cols() == 0) return Vec::Zero(s.num_edges());
  const auto& be = s.boundary_edges();
  Mat L(be.size(), sub.lift.cols());
  Vec r(be.size());
  for (std::size_t k = 0; k < be.size(); ++k) {
    const double w = std::sqrt(s.grid().edge_length(be[k]));
    L.row(k) = w * sub.lift.row(be[k]);
    r[k] = w * vb[be[k]];
  }
  return sub.lift * least_squares(L, r);
}

CoarseSolution coarse_solve(const MixedSubspace& sub, const FineSpaces& s, const Vec& kinv, double tol) {
  if (s.has_boundary_flux() && sub.lift.cols() == 0)
    throw ConfigError("nonzero boundary flux needs a subspace with a boundary lift");
  const SpMat M = s.mass(kinv);
  const Vec vg = boundary_lift(sub, s);
  const Mat MV = M * sub.velocity;
  const Mat A = sub.velocity.transpose() * MV;
  const Mat BN = sub.pressure.transpose() * Mat(s.B() * sub.velocity);
  const Vec f1 = -(MV.transpose() * vg);
  const Vec f2 = sub.pressure.transpose() * (s.F() - s.B() * vg);
  const Vec w = sub.pressure.transpose() * s.areas();
  const auto sol = solve_saddle_dense(A, BN, f1, f2, true, w, tol);
  CoarseSolution out;
  out.vc = sol.v;
  out.pc = -sol.p;
  out.v = vg + sub.velocity * out.vc;
  out.p = sub.pressure * out.pc;
  return out;
}

}  // namespace rmgms
