#include "rmgms/reduced.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rmgms {

namespace {

void check_positive(const Vec& kinv) {
  Eigen::Index c = 0;
  const double m = kinv.minCoeff(&c);
  if (!(m > 0.0)) {
    std::ostringstream os;
    os << "k^-1 is not positive in cell " << c << " (value " << m << ")";
    throw ModelError(os.str());
  }
}

SpMat selection(int n, const std::vector<int>& cols) {
  std::vector<Triplet> t;
  t.reserve(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) t.emplace_back(cols[k], static_cast<int>(k), 1.0);
  SpMat S(n, static_cast<int>(cols.size()));
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

SpMat local_to_sparse(const std::vector<const LocalVectors*>& cols_of, const std::vector<int>& col_index,
                      int n_edges) {
  std::vector<Triplet> t;
  for (std::size_t k = 0; k < cols_of.size(); ++k) {
    const LocalVectors& lv = *cols_of[k];
    for (std::size_t r = 0; r < lv.dofs.size(); ++r) {
      const double x = lv.values(r, col_index[k]);
      if (x != 0.0) t.emplace_back(lv.dofs[r], static_cast<int>(k), x);
    }
  }
  SpMat X(n_edges, static_cast<int>(cols_of.size()));
  X.setFromTriplets(t.begin(), t.end());
  return X;
}

// Extends an orthonormal coefficient basis T (K-inner product) by the unit
// vectors of `fresh`. Two projection passes; near-dependent ones are dropped.
// Returns the accepted positions.
std::vector<int> orthonormalize_into(const Mat& K, Mat& T, const std::vector<int>& fresh, double drop) {
  const int m = static_cast<int>(K.rows());
  Mat H = K * T;
  std::vector<int> kept;
  for (int j : fresh) {
    const double n0 = std::sqrt(std::max(K(j, j), 0.0));
    if (n0 == 0.0) continue;
    Vec t = Vec::Zero(m);
    t[j] = 1.0;
    for (int pass = 0; pass < 2; ++pass) t -= T * (H.transpose() * t);
    const Vec Kt = K * t;
    const double nt = std::sqrt(std::max(t.dot(Kt), 0.0));
    if (nt <= drop * n0) continue;
    T.conservativeResize(Eigen::NoChange, T.cols() + 1);
    H.conservativeResize(Eigen::NoChange, H.cols() + 1);
    T.col(T.cols() - 1) = t / nt;
    H.col(H.cols() - 1) = Kt / nt;
    kept.push_back(j);
  }
  return kept;
}

// One more Cholesky pass so that T^T K T = I to rounding.
void reorthonormalize(const Mat& K, Mat& T) {
  if (T.cols() == 0) return;
  const Mat S = T.transpose() * K * T;
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalFailure("reduced basis Gram matrix is not positive definite");
  T = llt.matrixU().solve<Eigen::OnTheRight>(T);
}

}  // namespace

// ---------------------------------------------------------------- context

ReducedContext::ReducedContext(const FineSpaces& s, AffineDecomposition ad, int local_basis)
    : s_(&s), ad_(std::move(ad)), l_(local_basis) {
  if (ad_.cells() != s.num_cells()) throw ConfigError("affine decomposition does not match the grid");
  M_ = assemble_affine(s, ad_).M;
  P_ = coarse_pressure_injection(s.grid());
  wblk_ = P_.transpose() * s.areas();
  for (const auto& ce : s.grid().coarse_edges())
    if (!ce.boundary) edges_.push_back(ce.index);
  for (int i : edges_)
    if (l_ < 1 || l_ > s.grid().coarse_edges()[i].J())
      throw ConfigError("local basis count must be between 1 and the fine edges per coarse edge");
}

FineSolution ReducedContext::fine(const Vec& mu) const { return solve_fine(*s_, ad_, mu); }

const Eigen::SimplicialLDLT<SpMat>& ReducedContext::gram_interior() const {
  if (!gram_) {
    const SpMat& PI = s_->interior_selector();
    const SpMat G = PI.transpose() * s_->gram_v() * PI;
    gram_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(G);
    if (gram_->info() != Eigen::Success) throw NumericalFailure("V Gram factorization failed");
  }
  return *gram_;
}

// ---------------------------------------------------------------- library

int SnapshotLibrary::min_snap() const {
  if (per_edge.empty()) return 0;
  int m = std::numeric_limits<int>::max();
  for (const auto& e : per_edge) m = std::min(m, e.count());
  return m;
}

SpMat SnapshotLibrary::group(int n, int n_edges) const {
  std::vector<const LocalVectors*> of;
  std::vector<int> idx;
  for (const auto& e : per_edge) {
    of.push_back(&e);
    idx.push_back(n);
  }
  return local_to_sparse(of, idx, n_edges);
}

void extend_library(SnapshotLibrary& lib, const ReducedContext& ctx, const Vec& mu) {
  const Vec kinv = ctx.affine().kinv(mu);
  check_positive(kinv);
  LocalSolver ls(ctx.grid(), kinv);
  if (lib.per_edge.empty()) {
    lib.edges = ctx.edges();
    lib.per_edge.resize(lib.edges.size());
  }
  for (std::size_t k = 0; k < lib.edges.size(); ++k) {
    const auto b = ls.spectral_reduce(ls.edge_snapshots(lib.edges[k]), ctx.local_basis());
    LocalVectors& lv = lib.per_edge[k];
    if (lv.dofs.empty()) {
      lv = b.basis;
    } else {
      const Eigen::Index c0 = lv.values.cols();
      lv.values.conservativeResize(Eigen::NoChange, c0 + b.basis.count());
      lv.values.rightCols(b.basis.count()) = b.basis.values;
    }
  }
  lib.mus.push_back(mu);
}

SnapshotLibrary build_library(const ReducedContext& ctx, const std::vector<Vec>& mus) {
  SnapshotLibrary lib;
  for (const auto& mu : mus) extend_library(lib, ctx, mu);
  return lib;
}

std::string to_string(BasisKind k) {
  switch (k) {
    case BasisKind::BOCV: return "bocv";
    case BasisKind::POD: return "pod";
    case BasisKind::Custom: return "custom";
  }
  return "custom";
}

BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "bocv") return BasisKind::BOCV;
  if (s == "pod") return BasisKind::POD;
  if (s == "custom") return BasisKind::Custom;
  throw ConfigError("unknown basis kind '" + s + "'");
}

// ---------------------------------------------------------------- space

ReducedSpace make_reduced_space(const ReducedContext& ctx, const SpMat& X, BasisKind kind, double drop_tol) {
  const FineSpaces& s = ctx.spaces();
  if (X.rows() != s.num_edges()) throw ConfigError("basis rows do not match the fine edges");
  for (int e : s.boundary_edges())
    if (X.row(e).norm() > 0.0) throw ConfigError("reduced velocity vectors must vanish on the boundary");
  const int m = static_cast<int>(X.cols());
  const Mat K = Mat(X.transpose() * s.gram_v() * X);
  Mat T(m, 0);
  std::vector<int> all(m);
  for (int j = 0; j < m; ++j) all[j] = j;
  const auto kept = orthonormalize_into(K, T, all, drop_tol);
  if (static_cast<int>(kept.size()) < m)
    warn("reduced basis: dropped " + std::to_string(m - kept.size()) + " dependent vectors");

  ReducedSpace rs;
  rs.kind = kind;
  const SpMat Sk = selection(m, kept);
  rs.X = X * Sk;
  rs.T = Sk.transpose() * T;
  const Mat Kk = Sk.transpose() * K * Sk;
  reorthonormalize(Kk, rs.T);
  rs.Z = rs.X * rs.T;
  rs.P = ctx.pressure();
  rs.block_areas = ctx.block_areas();
  rs.vg = s.boundary_values();
  for (const SpMat& Mq : ctx.mass_blocks()) {
    rs.MN.push_back(rs.T.transpose() * Mat(rs.X.transpose() * Mq * rs.X) * rs.T);
    rs.MG.push_back(rs.Z.transpose() * (Mq * rs.vg));
  }
  rs.BN = Mat(rs.P.transpose() * (s.B() * rs.X)) * rs.T;
  rs.FN = rs.P.transpose() * (s.F() - s.B() * rs.vg);
  return rs;
}

namespace {

ReducedSolution solve_blocks(const ReducedSpace& rs, const Mat& A, const Vec& f1, double tol) {
  ReducedSolution out;
  if (rs.size() == 0) {
    out.v = Vec::Zero(0);
    out.p = Vec::Zero(rs.num_blocks());
    return out;
  }
  try {
    const auto sol = solve_saddle_dense(A, rs.BN, f1, rs.FN, true, rs.block_areas, tol);
    out.v = sol.v;
    out.p = -sol.p;
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(std::string("reduced solve: ") + e.what());
  }
  return out;
}

}  // namespace

ReducedSolution reduced_solve(const ReducedSpace& rs, const AffineDecomposition& ad, const Vec& mu, double tol) {
  const Vec theta = ad.coefficients(mu);
  if (theta.size() != static_cast<Eigen::Index>(rs.MN.size()))
    throw ConfigError("reduced space was built for a different affine decomposition");
  const int n = rs.size();
  Mat A = Mat::Zero(n, n);
  Vec f1 = Vec::Zero(n);
  for (std::size_t q = 0; q < rs.MN.size(); ++q) {
    A += theta[q] * rs.MN[q];
    f1 -= theta[q] * rs.MG[q];
  }
  auto out = solve_blocks(rs, A, f1, tol);
  out.mu = mu;
  return out;
}

ReducedSolution reduced_solve_kinv(const ReducedSpace& rs, const FineSpaces& s, const Vec& kinv, double tol) {
  const SpMat M = s.mass(kinv);
  const Mat A = rs.T.transpose() * Mat(rs.X.transpose() * M * rs.X) * rs.T;
  const Vec f1 = -(rs.Z.transpose() * (M * rs.vg));
  return solve_blocks(rs, A, f1, tol);
}

FineFields reconstruct(const ReducedSpace& rs, const ReducedSolution& sol) {
  FineFields f;
  f.v = rs.vg;
  if (rs.size() > 0) f.v += rs.Z * sol.v;
  f.p = rs.P * sol.p;
  return f;
}

Vec project(const ReducedSpace& rs, const FineSpaces& s, const Vec& v) {
  return rs.Z.transpose() * (s.gram_v() * v);
}

ErrorPair relative_errors(const FineSpaces& s, const std::vector<FineFields>& reference,
                          const std::vector<FineFields>& approx) {
  if (reference.size() != approx.size()) throw ConfigError("relative_errors: sample counts differ");
  ErrorPair e;
  int n = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double nv = l2_norm(s, reference[i].v), np = pressure_l2_norm(s, reference[i].p);
    if (nv == 0.0 || np == 0.0) {
      warn("relative_errors: sample " + std::to_string(i) + " has a zero reference, skipped");
      continue;
    }
    e.velocity += l2_norm(s, reference[i].v - approx[i].v) / nv;
    e.pressure += pressure_l2_norm(s, reference[i].p - approx[i].p) / np;
    ++n;
  }
  if (n > 0) {
    e.velocity /= n;
    e.pressure /= n;
  }
  return e;
}

// ---------------------------------------------------------------- estimator

StabilityConstants stability_constants(const FineSpaces& s, int dense_limit) {
  const SpMat& PI = s.interior_selector();
  const SpMat GI = PI.transpose() * s.gram_v() * PI;
  const SpMat MI = PI.transpose() * s.mass_l2() * PI;
  const SpMat BI = s.B() * PI;
  const Vec& W = s.areas();
  StabilityConstants sc;
  const int ni = static_cast<int>(GI.rows());
  if (ni <= dense_limit && s.num_cells() <= dense_limit) {
    const auto ev = sym_eig(Mat(MI), Mat(GI));
    sc.c_V = ev.values[0];
    sc.C_V = ev.values[ni - 1];
    const Mat Sd = Mat(BI) * Eigen::LLT<Mat>(Mat(GI)).solve(Mat(BI.transpose()));
    const auto es = sym_eig(Sd, Mat(W.asDiagonal()));
    const double top = es.values.maxCoeff();
    for (Eigen::Index k = 0; k < es.values.size(); ++k)
      if (es.values[k] > 1e-10 * top) {
        sc.beta = std::sqrt(es.values[k]);
        break;
      }
    sc.exact = true;
    return sc;
  }
  // Elementwise: div Gram <= (12/hx^2 + 12/hy^2) L2 mass on each rectangle.
  const double hx = s.grid().hx(), hy = s.grid().hy();
  sc.c_V = 1.0 / (1.0 + 12.0 / (hx * hx) + 12.0 / (hy * hy));
  sc.C_V = 1.0;
  // Block inverse iteration with Rayleigh-Ritz for the smallest nonzero
  // eigenvalue of (B G^-1 B^T, W); the block absorbs near-degenerate pairs.
  SaddleFactorization fac(GI, BI, true, W);
  const int nc = s.num_cells();
  const int bs = std::min(4, nc - 1);
  Rng rng(17);
  Mat Y(nc, bs);
  for (int j = 0; j < bs; ++j)
    for (int c = 0; c < nc; ++c) Y(c, j) = rng.normal();
  auto solve_block = [&](const Mat& y) {
    Mat z(nc, y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j) z.col(j) = -fac.solve(Vec::Zero(ni), W.asDiagonal() * y.col(j), 1e-8).p;
    return z;
  };
  for (int j = 0; j < bs; ++j) Y.col(j).array() -= Y.col(j).dot(W) / W.sum();
  double lambda = 0.0;
  for (int it = 0; it < 300; ++it) {
    const Mat Z = solve_block(Y);  // S^{-1} W Y
    // Ritz pairs of S on span Z: Z^T S Z = Z^T W Y.
    const Mat A = Z.transpose() * W.asDiagonal() * Y;
    const Mat Bm = Z.transpose() * W.asDiagonal() * Z;
    const auto rr = sym_eig(0.5 * (A + A.transpose()), 0.5 * (Bm + Bm.transpose()));
    Y = Z * rr.vectors;
    const double th = rr.values[0];
    const bool done = it > 2 && std::abs(th - lambda) <= 1e-13 * th;
    lambda = th;
    if (done) break;
  }
  sc.beta = std::sqrt(lambda);
  return sc;
}

ErrorBounds error_bounds(double res_v, double res_p, double alpha, double gamma, double beta) {
  if (!(beta > 0.0)) throw ConfigError("inf-sup lower bound must be positive");
  if (!(alpha > 0.0)) throw ConfigError("coercivity lower bound must be positive");
  ErrorBounds b;
  b.velocity = res_v / alpha + (1.0 + gamma / alpha) * res_p / beta;
  b.pressure = res_v / beta + gamma / beta * b.velocity;
  return b;
}

ErrorEstimator::ErrorEstimator(const ReducedContext& ctx, const ReducedSpace& rs, StabilityConstants sc,
                               EstimatorMode mode, double table_budget)
    : ctx_(&ctx), rs_(&rs), sc_(sc) {
  const FineSpaces& s = ctx.spaces();
  if (s.has_boundary_flux()) throw ConfigError("the error estimator needs zero boundary flux");
  if (!(sc_.beta > 0.0)) throw ConfigError("inf-sup lower bound must be positive");
  const int n = rs.size(), m = ctx.affine().size(), nel = rs.num_blocks();
  const SpMat& PI = s.interior_selector();
  const double D = static_cast<double>(n) * m + nel;
  cached_ = mode == EstimatorMode::Cached ||
            (mode == EstimatorMode::Auto && D * D * static_cast<double>(PI.cols()) <= table_budget);
  if (!cached_) return;
  Mat Y(PI.cols(), n * m + nel);
  for (int q = 0; q < m; ++q) Y.middleCols(q * n, n) = -(PI.transpose() * (ctx.mass_blocks()[q] * rs.Z));
  Y.rightCols(nel) = Mat(PI.transpose() * (s.B().transpose() * rs.P));
  const Mat R = ctx.gram_interior().solve(Y);
  Tv_ = Y.transpose() * R;
  Tv_ = 0.5 * (Tv_ + Tv_.transpose()).eval();
  const Vec Winv = s.areas().cwiseInverse();
  const Mat BZ = s.B() * rs.Z;
  CC_ = s.F().dot(Winv.asDiagonal() * s.F());
  CX_ = -(BZ.transpose() * (Winv.asDiagonal() * s.F()));
  XX_ = BZ.transpose() * Winv.asDiagonal() * BZ;
}

ResidualNorms ErrorEstimator::residuals(const ReducedSolution& sol) const {
  if (!cached_) return residuals_direct(sol);
  const Vec theta = ctx_->affine().coefficients(sol.mu);
  const int n = rs_->size(), m = static_cast<int>(theta.size()), nel = rs_->num_blocks();
  Vec c(n * m + nel);
  for (int q = 0; q < m; ++q) c.segment(q * n, n) = theta[q] * sol.v;
  c.tail(nel) = sol.p;
  ResidualNorms r;
  r.v = std::sqrt(std::max(0.0, c.dot(Tv_ * c)));
  r.p = std::sqrt(std::max(0.0, CC_ + 2.0 * sol.v.dot(CX_) + sol.v.dot(XX_ * sol.v)));
  return r;
}

ResidualNorms ErrorEstimator::residuals_direct(const ReducedSolution& sol) const {
  const FineSpaces& s = ctx_->spaces();
  const SpMat& PI = s.interior_selector();
  const Vec kinv = ctx_->affine().kinv(sol.mu);
  const Vec v = rs_->size() > 0 ? Vec(rs_->Z * sol.v) : Vec::Zero(s.num_edges());
  const Vec r1 = PI.transpose() * (-(s.mass(kinv) * v) + s.B().transpose() * (rs_->P * sol.p));
  const Vec r2 = s.F() - s.B() * v;
  ResidualNorms r;
  r.v = std::sqrt(std::max(0.0, r1.dot(ctx_->gram_interior().solve(r1))));
  r.p = std::sqrt(std::max(0.0, r2.dot(s.areas().cwiseInverse().asDiagonal() * r2)));
  return r;
}

ErrorBounds ErrorEstimator::estimate(const ReducedSolution& sol) const {
  const Vec kinv = ctx_->affine().kinv(sol.mu);
  check_positive(kinv);
  const auto r = residuals(sol);
  return error_bounds(r.v, r.p, kinv.minCoeff() * sc_.c_V, kinv.maxCoeff() * sc_.C_V, sc_.beta);
}

// ---------------------------------------------------------------- POD

PodResult pod_build(const ReducedContext& ctx, const SnapshotLibrary& lib, int m_p) {
  if (m_p < 1 || m_p > lib.min_snap())
    throw ConfigError("POD size must be between 1 and the smallest per-edge snapshot count");
  const FineSpaces& s = ctx.spaces();
  PodResult out;
  std::vector<LocalVectors> modes(lib.per_edge.size());
  for (std::size_t k = 0; k < lib.per_edge.size(); ++k) {
    const LocalVectors& y = lib.per_edge[k];
    const SpMat S = selection(s.num_edges(), y.dofs);
    const Mat G = Mat(S.transpose() * s.gram_v() * S);
    const Mat aleph = y.values.transpose() * G * y.values;
    const auto ep = sym_eig(0.5 * (aleph + aleph.transpose()));
    const int n = static_cast<int>(ep.values.size());
    Vec lam = ep.values.reverse();
    const double top = std::max(lam[0], 0.0);
    int r = 0;
    while (r < m_p && lam[r] > 1e-12 * top && lam[r] > 0.0) ++r;
    if (r < m_p)
      warn("POD: edge " + std::to_string(lib.edges[k]) + " has rank " + std::to_string(r) + " < " +
           std::to_string(m_p));
    modes[k].dofs = y.dofs;
    modes[k].values.resize(y.dofs.size(), r);
    for (int j = 0; j < r; ++j) modes[k].values.col(j) = y.values * ep.vectors.col(n - 1 - j) / std::sqrt(lam[j]);
    out.eigenvalues.push_back(lam);
    out.modes.push_back(r);
  }
  std::vector<const LocalVectors*> of;
  std::vector<int> idx;
  for (int j = 0; j < m_p; ++j)
    for (std::size_t k = 0; k < modes.size(); ++k)
      if (j < modes[k].count()) {
        of.push_back(&modes[k]);
        idx.push_back(j);
      }
  out.space = make_reduced_space(ctx, local_to_sparse(of, idx, s.num_edges()), BasisKind::POD);
  return out;
}

// ---------------------------------------------------------------- greedy

GreedyResult greedy_select(const ReducedContext& ctx, const Mat& train, const GreedyOptions& opt,
                           const StabilityConstants& sc) {
  if (train.rows() == 0) throw ConfigError("greedy: empty training set");
  if (opt.first < 0 || opt.first >= train.rows()) throw ConfigError("greedy: first sample out of range");
  if (opt.max_size < 1) throw ConfigError("greedy: max size must be positive");
  GreedyResult res;
  std::vector<int> remaining;
  for (int i = 0; i < train.rows(); ++i)
    if (i != opt.first) remaining.push_back(i);
  res.selected.push_back(opt.first);
  SnapshotLibrary lib = build_library(ctx, {train.row(opt.first).transpose()});
  while (static_cast<int>(res.selected.size()) < opt.max_size && !remaining.empty()) {
    const auto pod = pod_build(ctx, lib, std::min(opt.n_p, lib.min_snap()));
    const ErrorEstimator est(ctx, pod.space, sc, opt.mode);
    int best = -1;
    double eps = -1.0;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      const Vec mu = train.row(remaining[k]).transpose();
      const double d = est.estimate(reduced_solve(pod.space, ctx.affine(), mu)).velocity;
      if (d > eps) {
        eps = d;
        best = static_cast<int>(k);
      }
    }
    const bool stalled = !res.eps.empty() && eps >= res.eps.back() * (1.0 - 1e-10);
    res.eps.push_back(eps);
    if (stalled) break;
    const int pick = remaining[best];
    remaining.erase(remaining.begin() + best);
    res.selected.push_back(pick);
    extend_library(lib, ctx, train.row(pick).transpose());
  }
  return res;
}

// ---------------------------------------------------------------- BOCV

BocvResult bocv_build(const ReducedContext& ctx, const SnapshotLibrary& lib,
                      const std::vector<FineSolution>& validation, const BocvOptions& opt) {
  if (validation.empty()) throw ConfigError("BOCV: empty validation set");
  const FineSpaces& s = ctx.spaces();
  const int ne = static_cast<int>(lib.per_edge.size());
  const int ng = lib.num_groups();
  if (ng == 0) throw ConfigError("BOCV: empty snapshot library");
  // Library columns are group-major: column n * ne + k is vector n of edge k.
  std::vector<const LocalVectors*> of;
  std::vector<int> idx;
  for (int n = 0; n < ng; ++n)
    for (int k = 0; k < ne; ++k) {
      of.push_back(&lib.per_edge[k]);
      idx.push_back(n);
    }
  const SpMat X = local_to_sparse(of, idx, s.num_edges());
  const Mat G = Mat(X.transpose() * s.gram_v() * X);
  const Vec& vg = s.boundary_values();
  const Mat BX = Mat(ctx.pressure().transpose() * (s.B() * X));
  const Vec FN = ctx.pressure().transpose() * (s.F() - s.B() * vg);
  struct Val {
    SpMat K;
    Vec h, g;
    double nrm2;
  };
  std::vector<Val> val;
  for (const auto& f : validation) {
    const Vec kinv = ctx.affine().kinv(f.mu);
    check_positive(kinv);
    const SpMat M = s.mass(kinv);
    const Vec d = f.v - vg;
    const Vec Gd = s.gram_v() * d;
    val.push_back({SpMat(X.transpose() * M * X), X.transpose() * (M * vg), X.transpose() * Gd, d.dot(Gd)});
  }

  BocvResult out;
  std::vector<int> cur;   // library columns in the current space
  Mat Tcur(0, 0);
  std::vector<bool> used(ng, false);
  const int cap = opt.max_groups < 0 ? ng : std::min(opt.max_groups, ng);
  while (static_cast<int>(out.groups.size()) < cap) {
    int best = -1;
    double best_err = std::numeric_limits<double>::infinity();
    std::vector<int> best_cols;
    Mat best_T;
    for (int j = 0; j < ng; ++j) {
      if (used[j]) continue;
      std::vector<int> cols = cur;
      for (int k = 0; k < ne; ++k) cols.push_back(j * ne + k);
      const int nc = static_cast<int>(cols.size());
      const SpMat Sc = selection(static_cast<int>(X.cols()), cols);
      const Mat Kc = Sc.transpose() * G * Sc;
      Mat T = Mat::Zero(nc, Tcur.cols());
      T.topRows(cur.size()) = Tcur;
      std::vector<int> fresh;
      for (int k = static_cast<int>(cur.size()); k < nc; ++k) fresh.push_back(k);
      orthonormalize_into(Kc, T, fresh, 1e-8);
      double err = 0.0;
      try {
        const Mat BN = BX * Sc * T;
        for (const auto& v : val) {
          const Mat A = T.transpose() * Mat(Sc.transpose() * v.K * Sc) * T;
          const Vec f1 = -(T.transpose() * (Sc.transpose() * v.h));
          const auto sol = solve_saddle_dense(A, BN, f1, FN, true, ctx.block_areas(), 1e-9);
          const Vec gc = T.transpose() * (Sc.transpose() * v.g);
          err += std::sqrt(std::max(0.0, v.nrm2 - 2.0 * sol.v.dot(gc) + sol.v.squaredNorm()));
        }
      } catch (const NumericalFailure& e) {
        warn("BOCV: group " + std::to_string(j) + " skipped: " + e.what());
        continue;
      }
      err /= static_cast<double>(val.size());
      if (err < best_err) {
        best_err = err;
        best = j;
        best_cols = std::move(cols);
        best_T = std::move(T);
      }
    }
    if (best < 0) break;
    used[best] = true;
    cur = std::move(best_cols);
    Tcur = std::move(best_T);
    out.groups.push_back(best);
    out.mean_error.push_back(best_err);
    if (best_err <= opt.eps_star) break;
  }
  std::vector<int> order;
  for (int n : out.groups)
    for (int k = 0; k < ne; ++k) order.push_back(n * ne + k);
  out.space = make_reduced_space(ctx, X * selection(static_cast<int>(X.cols()), order), BasisKind::BOCV);
  return out;
}

}  // namespace rmgms
