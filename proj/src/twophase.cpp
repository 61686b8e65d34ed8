#include "rmgms/twophase.hpp"

#include "rmgms/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rmgms {

namespace {

double clip_saturation(double S) {
  if (S < -1e-12 || S > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "saturation " << S << " outside [0,1], clipped";
    warn(os.str());
  }
  return std::clamp(S, 0.0, 1.0);
}

double flux_no_clip(double S, const TwoPhaseConfig& cfg) {
  if (cfg.linear_flux) return S;
  const double a = S * S, b = cfg.viscosity_ratio * (1.0 - S) * (1.0 - S);
  return a / (a + b);
}

void check_config(const TwoPhaseConfig& cfg) {
  if (!(cfg.viscosity_ratio > 0.0) || !(cfg.mu_o > 0.0)) throw ConfigError("viscosities must be positive");
  if (cfg.dt < 0.0) throw ConfigError("time step must be positive");
  if (!(cfg.cfl_safety > 0.0) || cfg.cfl_safety > 1.0) throw ConfigError("CFL safety must lie in (0,1]");
  if (!(cfg.pvi_per_unit > 0.0)) throw ConfigError("pvi_per_unit must be positive");
  for (std::size_t i = 0; i < cfg.record_times.size(); ++i) {
    if (cfg.record_times[i] < 0.0) throw ConfigError("record times must be nonnegative");
    if (i > 0 && cfg.record_times[i] <= cfg.record_times[i - 1])
      throw ConfigError("record times must be increasing");
  }
}

// Outward flux of edge e from cell c, as v_e |e| with the sign of the normal.
double outward(const GridHierarchy& g, int e, int c, const Vec& v) {
  const double F = v[e] * g.edge_length(e);
  return g.edge_cells(e)[0] == c ? F : -F;
}

}  // namespace

double fractional_flow(double S, const TwoPhaseConfig& cfg) { return flux_no_clip(clip_saturation(S), cfg); }

double fractional_flow_derivative(double S, const TwoPhaseConfig& cfg) {
  S = clip_saturation(S);
  if (cfg.linear_flux) return 1.0;
  const double r = cfg.viscosity_ratio;
  const double d = S * S + r * (1.0 - S) * (1.0 - S);
  return 2.0 * r * S * (1.0 - S) / (d * d);
}

double mobility(double S, const TwoPhaseConfig& cfg) {
  S = clip_saturation(S);
  const double mu_w = cfg.viscosity_ratio * cfg.mu_o;
  return S * S / mu_w + (1.0 - S) * (1.0 - S) / cfg.mu_o;
}

double max_flux_derivative(const TwoPhaseConfig& cfg) {
  if (cfg.linear_flux) return 1.0;
  // f' is unimodal on (0,1); golden-section search for its maximum.
  double a = 0.0, b = 1.0;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = fractional_flow_derivative(x1, cfg), f2 = fractional_flow_derivative(x2, cfg);
  for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = fractional_flow_derivative(x2, cfg);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = fractional_flow_derivative(x1, cfg);
    }
  }
  return std::max(f1, f2);
}

Vec two_spot_source(const GridHierarchy& g) {
  Vec q = Vec::Zero(g.num_cells());
  for (int c : g.block_cells(g.block(0, g.ncy() - 1))) q[c] = 1.0;
  for (int c : g.block_cells(g.block(g.ncx() - 1, 0))) q[c] = -1.0;
  return q;
}

std::vector<int> producer_cells(const Vec& q) {
  std::vector<int> out;
  for (int c = 0; c < q.size(); ++c)
    if (q[c] < 0.0) out.push_back(c);
  return out;
}

double model_time(const GridHierarchy& g, const Vec& q, const TwoPhaseConfig& cfg, double record) {
  const double rate = g.cell_area() * q.cwiseMax(0.0).sum();
  if (!(rate > 0.0)) throw ConfigError("source has no injection");
  return record * cfg.pvi_per_unit / rate;  // pore volume of the unit square is 1
}

FlowSolver::FlowSolver(const FineSpaces& s) : s_(&s) {
  if (s.has_boundary_flux()) throw ConfigError("two-phase flow expects a no-flow boundary");
}

FlowSolver::FlowSolver(const FineSpaces& s, const ReducedSpace& rs) : s_(&s), rs_(&rs) {
  if (s.has_boundary_flux()) throw ConfigError("two-phase flow expects a no-flow boundary");
  if (rs.X.rows() != s.num_edges()) throw ConfigError("reduced space does not match the fine grid");
  BX_ = rs.P.transpose() * s.B() * rs.X;
  FN_ = rs.P.transpose() * s.F();
}

Vec FlowSolver::velocity(const Vec& kinv_eff) const {
  if (!rs_) return solve_fine_kinv(*s_, kinv_eff).v;
  if (rs_->X.cols() == 0) return Vec::Zero(s_->num_edges());
  const SpMat M = s_->mass(kinv_eff);
  const Mat A = Mat(rs_->X.transpose() * M * rs_->X);
  const Mat B = Mat(BX_);
  const auto sol = solve_saddle_dense(A, B, Vec::Zero(A.rows()), FN_, true, rs_->block_areas);
  return rs_->X * sol.v;
}

Vec FlowSolver::velocity_dense(const Vec& kinv_eff) const {
  if (!rs_) return velocity(kinv_eff);
  const auto sol = reduced_solve_kinv(*rs_, *s_, kinv_eff);
  return reconstruct(*rs_, sol).v;
}

double cfl_step(const FineSpaces& s, const Vec& v, const Vec& q, const TwoPhaseConfig& cfg, int* limiting_cell) {
  const GridHierarchy& g = s.grid();
  const double Lf = max_flux_derivative(cfg);
  const double area = g.cell_area();
  double worst = 0.0;
  int arg = -1;
  for (int c = 0; c < g.num_cells(); ++c) {
    double out = area * std::max(-q[c], 0.0);
    for (int e : g.cell_edges(c)) out += std::max(outward(g, e, c, v), 0.0);
    if (out > worst) {
      worst = out;
      arg = c;
    }
  }
  if (limiting_cell) *limiting_cell = arg;
  if (worst == 0.0) return std::numeric_limits<double>::infinity();
  return cfg.cfl_safety * area / (Lf * worst);
}

TransportStep transport_step(const FineSpaces& s, const Vec& S, const Vec& v, const Vec& q,
                             const TwoPhaseConfig& cfg, double dt) {
  const GridHierarchy& g = s.grid();
  const int n = g.num_cells();
  if (S.size() != n || q.size() != n || v.size() != g.num_edges())
    throw ConfigError("transport_step: size mismatch");
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  int lim = -1;
  const double bound = cfl_step(s, v, q, cfg, &lim);
  if (dt > bound * (1.0 + 1e-12)) {
    const auto m = g.cell_center(lim);
    std::ostringstream os;
    os << "CFL violated: dt " << dt << " exceeds " << bound << " set by cell " << lim << " at (" << m[0] << ", "
       << m[1] << ")";
    throw ConfigError(os.str());
  }
  const double area = g.cell_area();
  Vec f(n);
  for (int c = 0; c < n; ++c) f[c] = fractional_flow(S[c], cfg);

  // Water flux through each edge, positive along the axis.
  Vec div = Vec::Zero(n);
  TransportStep out;
  for (int e = 0; e < g.num_edges(); ++e) {
    const double F = v[e] * g.edge_length(e);
    if (F == 0.0) continue;
    const auto cells = g.edge_cells(e);
    const int donor = F > 0.0 ? cells[0] : cells[1];
    // Water enters through inflow boundaries.
    const double fw = donor < 0 ? 1.0 : f[donor];
    const double W = fw * F;
    if (cells[0] >= 0) div[cells[0]] += W;
    if (cells[1] >= 0) div[cells[1]] -= W;
    if (cells[0] < 0) out.boundary_out -= W;
    if (cells[1] < 0) out.boundary_out += W;
  }
  out.S.resize(n);
  double change = 0.0;
  for (int c = 0; c < n; ++c) {
    const double qs = std::max(q[c], 0.0) + f[c] * std::min(q[c], 0.0);
    out.water_in += area * qs;
    out.S[c] = S[c] + dt / area * (area * qs - div[c]);
    change += area * (out.S[c] - S[c]);
  }
  out.mass_residual = std::abs(change - dt * (out.water_in - out.boundary_out));
  out.water_in *= dt;
  out.boundary_out *= dt;
  return out;
}

TwoPhaseState impes_step(const TwoPhaseState& state, const FlowSolver& flow, const Vec& kinv, const Vec& q,
                         const TwoPhaseConfig& cfg, double dt, TransportStep* info) {
  const int n = static_cast<int>(state.S.size());
  Vec w(n);
  for (int c = 0; c < n; ++c) w[c] = kinv[c] / mobility(state.S[c], cfg);
  TwoPhaseState next;
  next.v = flow.velocity(w);
  auto step = transport_step(flow.spaces(), state.S, next.v, q, cfg, dt);
  next.S = step.S;
  next.t = state.t + dt;
  if (info) *info = std::move(step);
  return next;
}

double water_cut(const Vec& S, const Vec& q, const Vec& areas, const TwoPhaseConfig& cfg) {
  double qw = 0.0, qt = 0.0;
  for (int c = 0; c < S.size(); ++c) {
    if (q[c] >= 0.0) continue;
    const double r = -q[c] * areas[c];
    qw += r * fractional_flow(S[c], cfg);
    qt += r;
  }
  if (qt == 0.0) throw ConfigError("water_cut: no producer cells");
  return qw / qt;
}

TwoPhaseResult simulate(const FlowSolver& flow, const Vec& kinv, const TwoPhaseConfig& cfg) {
  check_config(cfg);
  const FineSpaces& s = flow.spaces();
  const GridHierarchy& g = s.grid();
  const Vec q = two_spot_source(g);
  if ((s.F() - s.areas().cwiseProduct(q)).cwiseAbs().maxCoeff() > 1e-12 * s.areas().maxCoeff())
    throw ConfigError("fine source does not match the two-spot pattern");
  if (kinv.size() != g.num_cells()) throw ConfigError("simulate: coefficient size mismatch");

  TwoPhaseResult res;
  res.times = cfg.record_times;
  const int nt = static_cast<int>(cfg.record_times.size());
  res.saturation = Mat::Zero(g.num_cells(), nt);
  res.watercut = Vec::Zero(nt);

  TwoPhaseState st;
  st.S = Vec::Zero(g.num_cells());
  st.t = 0.0;
  res.min_S = res.max_S = 0.0;
  for (int k = 0; k < nt; ++k) {
    const double target = model_time(g, q, cfg, cfg.record_times[k]);
    while (st.t < target * (1.0 - 1e-14)) {
      const int n = g.num_cells();
      Vec w(n);
      for (int c = 0; c < n; ++c) w[c] = kinv[c] / mobility(st.S[c], cfg);
      const Vec v = flow.velocity(w);
      double dt = cfg.dt > 0.0 ? cfg.dt : cfl_step(s, v, q, cfg);
      bool last = false;
      if (st.t + dt >= target) {
        dt = target - st.t;
        last = true;
      }
      const auto step = transport_step(s, st.S, v, q, cfg, dt);
      st.S = step.S;
      st.v = v;
      st.t = last ? target : st.t + dt;
      ++res.steps;
      res.max_mass_residual = std::max(res.max_mass_residual, step.mass_residual);
      res.min_S = std::min(res.min_S, st.S.minCoeff());
      res.max_S = std::max(res.max_S, st.S.maxCoeff());
    }
    res.saturation.col(k) = st.S;
    res.watercut[k] = water_cut(st.S, q, s.areas(), cfg);
  }
  return res;
}

EnsembleStats ensemble_stats(const Mat& fields) {
  if (fields.cols() < 2) throw ConfigError("ensemble_stats: variance needs at least two samples");
  EnsembleStats st;
  st.mean = fields.rowwise().mean();
  const Mat d = fields.colwise() - st.mean;
  st.variance = d.rowwise().squaredNorm() / static_cast<double>(fields.cols() - 1);
  return st;
}

Vec saturation_errors(const Mat& reference, const Mat& approx, const Vec& areas, int n_times) {
  if (reference.rows() != approx.rows() || reference.cols() != approx.cols())
    throw ConfigError("saturation_errors: ensembles differ in shape");
  const int n = static_cast<int>(areas.size());
  if (n_times <= 0 || reference.rows() != static_cast<Eigen::Index>(n) * n_times)
    throw ConfigError("saturation_errors: rows must be cells x times");
  Vec eps = Vec::Zero(n_times);
  for (int t = 0; t < n_times; ++t) {
    int used = 0;
    for (int j = 0; j < reference.cols(); ++j) {
      const auto r = reference.col(j).segment(t * n, n);
      const auto a = approx.col(j).segment(t * n, n);
      const double nr = areas.dot(r.cwiseAbs());
      if (nr == 0.0) continue;
      eps[t] += areas.dot((r - a).cwiseAbs()) / nr;
      ++used;
    }
    if (used == 0) warn("saturation_errors: all references vanish at time index " + std::to_string(t));
    else eps[t] /= used;
  }
  return eps;
}

SparseTensorRep saturation_surrogate(const Mat& snapshots, const Vec& areas, int n_times, const Mat& params,
                                     int n_modes, const PolynomialBasis& basis, const SampleDesign& design,
                                     double eps, int max_terms) {
  if (n_times <= 0 || snapshots.rows() != areas.size() * n_times)
    throw ConfigError("saturation_surrogate: rows must be cells x times");
  const Vec w = areas.replicate(n_times, 1);
  return staomp(snapshots, w, params, n_modes, basis, design, eps, max_terms);
}

SparseTensorRep watercut_surrogate(const Mat& snapshots, const Mat& params, int n_modes,
                                   const PolynomialBasis& basis, const SampleDesign& design, double eps,
                                   int max_terms) {
  const Vec w = Vec::Ones(snapshots.rows());
  return staomp(snapshots, w, params, n_modes, basis, design, eps, max_terms);
}

}  // namespace rmgms
