#include "rmgms/mixedfem.hpp"

#include "rmgms/linalg.hpp"

#include <cmath>
#include <sstream>

namespace rmgms {

FineSpaces::FineSpaces(const GridHierarchy& g) : g_(&g) {
  const int ne = g.num_edges(), nc = g.num_cells();
  const double hx = g.hx(), hy = g.hy();
  W_ = Vec::Constant(nc, g.cell_area());
  F_ = Vec::Zero(nc);
  vb_ = Vec::Zero(ne);

  std::vector<Triplet> tb;
  tb.reserve(4 * nc);
  for (int c = 0; c < nc; ++c) {
    const auto e = g.cell_edges(c);
    tb.emplace_back(c, e[0], -hy);
    tb.emplace_back(c, e[1], hy);
    tb.emplace_back(c, e[2], -hx);
    tb.emplace_back(c, e[3], hx);
  }
  B_.resize(nc, ne);
  B_.setFromTriplets(tb.begin(), tb.end());

  // Mass pattern: every cell couples (L,R) and (B,T).
  std::vector<Triplet> tp;
  tp.reserve(8 * nc);
  for (int c = 0; c < nc; ++c) {
    const auto e = g.cell_edges(c);
    for (int a : {0, 1})
      for (int b : {0, 1}) tp.emplace_back(e[a], e[b], 1.0);
    for (int a : {2, 3})
      for (int b : {2, 3}) tp.emplace_back(e[a], e[b], 1.0);
  }
  pattern_.resize(ne, ne);
  pattern_.setFromTriplets(tp.begin(), tp.end());
  pattern_.makeCompressed();
  auto slot = [&](int r, int col) {
    const int* outer = pattern_.outerIndexPtr();
    const int* inner = pattern_.innerIndexPtr();
    for (int k = outer[col]; k < outer[col + 1]; ++k)
      if (inner[k] == r) return k;
    throw NumericalFailure("mass pattern lookup failed");
  };
  slots_.resize(nc);
  for (int c = 0; c < nc; ++c) {
    const auto e = g.cell_edges(c);
    slots_[c] = {slot(e[0], e[0]), slot(e[1], e[1]), slot(e[0], e[1]), slot(e[1], e[0]),
                 slot(e[2], e[2]), slot(e[3], e[3]), slot(e[2], e[3]), slot(e[3], e[2])};
  }
  M1_ = mass(Vec::Ones(nc));
  GV_ = M1_ + SpMat(B_.transpose() * W_.cwiseInverse().asDiagonal() * B_);

  interior_pos_.assign(ne, -1);
  for (int e = 0; e < ne; ++e) {
    if (g.is_boundary_edge(e)) {
      boundary_.push_back(e);
    } else {
      interior_pos_[e] = static_cast<int>(interior_.size());
      interior_.push_back(e);
    }
  }
  std::vector<Triplet> ts;
  for (std::size_t k = 0; k < interior_.size(); ++k) ts.emplace_back(interior_[k], static_cast<int>(k), 1.0);
  PI_.resize(ne, static_cast<int>(interior_.size()));
  PI_.setFromTriplets(ts.begin(), ts.end());
}

SpMat FineSpaces::mass(const Vec& w) const {
  if (w.size() != g_->num_cells()) throw ConfigError("mass weight has the wrong length");
  SpMat M = pattern_;
  double* val = M.valuePtr();
  std::fill(val, val + M.nonZeros(), 0.0);
  const double a = g_->cell_area();
  const double d = a / 3.0, o = a / 6.0;
  for (int c = 0; c < g_->num_cells(); ++c) {
    const auto& s = slots_[c];
    const double wc = w[c];
    val[s[0]] += wc * d;
    val[s[1]] += wc * d;
    val[s[2]] += wc * o;
    val[s[3]] += wc * o;
    val[s[4]] += wc * d;
    val[s[5]] += wc * d;
    val[s[6]] += wc * o;
    val[s[7]] += wc * o;
  }
  return M;
}

void FineSpaces::set_source(const std::function<double(double, double)>& f) {
  for (int c = 0; c < num_cells(); ++c) {
    const auto m = g_->cell_center(c);
    F_[c] = f(m[0], m[1]) * g_->cell_area();
  }
}

void FineSpaces::set_source_integrals(const Vec& F) {
  if (F.size() != num_cells()) throw ConfigError("source vector has the wrong length");
  F_ = F;
}

void FineSpaces::set_boundary_flux(const Vec& g_out) {
  if (g_out.size() != num_edges()) throw ConfigError("boundary flux vector has the wrong length");
  vb_.setZero();
  for (int e : boundary_) {
    // Outward normal is +axis on right/top edges and -axis on left/bottom.
    const bool plus_side_outside = g_->edge_cells(e)[1] < 0;
    vb_[e] = plus_side_outside ? g_out[e] : -g_out[e];
  }
}

AffineFineBlocks assemble_affine(const FineSpaces& s, const AffineDecomposition& ad) {
  AffineFineBlocks b;
  for (int q = 0; q < ad.size(); ++q) b.M.push_back(s.mass(ad.term(q).field));
  b.B = s.B();
  b.F = s.F();
  return b;
}

FineSolution solve_fine_kinv(const FineSpaces& s, const Vec& kinv, double tol) {
  const Vec& vb = s.boundary_values();
  const double net = s.F().sum() - (s.B() * vb).sum();
  const double scale = 1.0 + s.F().cwiseAbs().sum() + (s.B() * vb).cwiseAbs().sum();
  if (std::abs(net) > 1e-10 * scale) {
    std::ostringstream os;
    os << "incompatible data: integral of f minus boundary outflux is " << net;
    throw ConfigError(os.str());
  }
  const SpMat M = s.mass(kinv);
  const SpMat& P = s.interior_selector();
  const SpMat A = P.transpose() * M * P;
  const SpMat BI = s.B() * P;
  // Physical form M v - B^T p = 0, B v = F; the generic solver uses +B^T.
  const Vec f1 = -(P.transpose() * (M * vb));
  const Vec f2 = s.F() - s.B() * vb;
  SaddleFactorization fac(A, BI, true, s.areas());
  const auto sol = fac.solve(f1, f2, tol);
  FineSolution out;
  out.v = vb + P * sol.v;
  out.p = -sol.p;
  return out;
}

FineSolution solve_fine(const FineSpaces& s, const AffineDecomposition& ad, const Vec& mu, double tol) {
  FineSolution f = solve_fine_kinv(s, ad.kinv(mu), tol);
  f.mu = mu;
  return f;
}

double local_conservation_residual(const FineSpaces& s, const Vec& v) {
  return (s.B() * v - s.F()).cwiseAbs().maxCoeff();
}

double l2_norm(const FineSpaces& s, const Vec& v) { return std::sqrt(std::max(0.0, v.dot(s.mass_l2() * v))); }

double hdiv_norm(const FineSpaces& s, const Vec& v) { return std::sqrt(std::max(0.0, v.dot(s.gram_v() * v))); }

double pressure_l2_norm(const FineSpaces& s, const Vec& p) {
  return std::sqrt(p.dot(s.areas().asDiagonal() * p));
}

}  // namespace rmgms
