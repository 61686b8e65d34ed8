#include <doctest.h>

#include "rmgms/twophase.hpp"

#include <cmath>

using namespace rmgms;

namespace {

// Two-spot source on the fine spaces.
Vec set_two_spot(FineSpaces& s) {
  const Vec q = two_spot_source(s.grid());
  s.set_source_integrals(s.areas().cwiseProduct(q));
  return q;
}

Vec lognormal_kinv(int cells, std::uint64_t seed, double spread) {
  Rng rng(seed);
  Vec k(cells);
  for (int c = 0; c < cells; ++c) k[c] = std::exp(spread * rng.normal());
  return k;
}

}  // namespace

TEST_SUITE("twophase") {

TEST_CASE("fractional flow values") {
  TwoPhaseConfig cfg;
  CHECK(fractional_flow(0.0, cfg) == 0.0);
  CHECK(fractional_flow(1.0, cfg) == 1.0);
  CHECK(fractional_flow(0.5, cfg) == doctest::Approx(10.0 / 11.0).epsilon(1e-14));
  CHECK(fractional_flow(0.6, cfg) > fractional_flow(0.4, cfg));
  for (double S = 0.0; S < 1.0; S += 0.05) CHECK(fractional_flow(S + 0.05, cfg) > fractional_flow(S, cfg));
}

TEST_CASE("fractional flow clips out-of-range saturation") {
  TwoPhaseConfig cfg;
  const auto before = warning_count();
  set_quiet(true);
  CHECK(fractional_flow(1.5, cfg) == 1.0);
  CHECK(fractional_flow(-0.2, cfg) == 0.0);
  CHECK(fractional_flow(1.0 + 1e-13, cfg) == 1.0);
  set_quiet(false);
  CHECK(warning_count() == before + 2);
}

TEST_CASE("mobility values") {
  TwoPhaseConfig cfg;
  CHECK(mobility(0.0, cfg) == doctest::Approx(1.0));
  CHECK(mobility(1.0, cfg) == doctest::Approx(10.0));
  CHECK(mobility(0.5, cfg) == doctest::Approx(2.75));
  cfg.mu_o = 2.0;
  CHECK(mobility(0.0, cfg) == doctest::Approx(0.5));
  CHECK(mobility(1.0, cfg) == doctest::Approx(5.0));
}

TEST_CASE("flux derivative matches finite differences and its maximum") {
  TwoPhaseConfig cfg;
  double sup = 0.0;
  for (int i = 1; i < 2000; ++i) {
    const double S = i / 2000.0, h = 1e-6;
    const double fd = (fractional_flow(S + h, cfg) - fractional_flow(S - h, cfg)) / (2 * h);
    CHECK(fractional_flow_derivative(S, cfg) == doctest::Approx(fd).epsilon(1e-6));
    sup = std::max(sup, fractional_flow_derivative(S, cfg));
  }
  const double L = max_flux_derivative(cfg);
  CHECK(L >= sup * (1 - 1e-12));
  CHECK(L <= sup * (1 + 1e-5));
  cfg.linear_flux = true;
  CHECK(max_flux_derivative(cfg) == 1.0);
}

TEST_CASE("two-spot source has zero net rate") {
  GridHierarchy g(12, 8, 3, 2);
  const Vec q = two_spot_source(g);
  CHECK(q.sum() == 0.0);
  CHECK(q.cwiseMax(0.0).sum() == g.block_cells(0).size());
  const auto tl = g.cell_center(g.cell(0, g.ny() - 1));
  const auto br = g.cell_center(g.cell(g.nx() - 1, 0));
  CHECK(q[g.cell(0, g.ny() - 1)] == 1.0);
  CHECK(q[g.cell(g.nx() - 1, 0)] == -1.0);
  CHECK(tl[1] > 0.5);
  CHECK(br[0] > 0.5);
  CHECK(producer_cells(q).size() == g.block_cells(0).size());
  TwoPhaseConfig cfg;
  // Injection rate is the block area, 1/6 here.
  CHECK(model_time(g, q, cfg, 500.0) == doctest::Approx(500.0 * cfg.pvi_per_unit * 6.0));
}

TEST_CASE("no velocity and no source leaves saturation unchanged") {
  GridHierarchy g(6, 6, 2, 2);
  FineSpaces s(g);
  TwoPhaseConfig cfg;
  const Vec S = Vec::Zero(g.num_cells());
  const auto st = transport_step(s, S, Vec::Zero(g.num_edges()), Vec::Zero(g.num_cells()), cfg, 0.3);
  CHECK(st.S.cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.mass_residual == 0.0);
}

TEST_CASE("linear donor-cell update matches hand calculation") {
  const int n = 8;
  GridHierarchy g(n, 1, 1, 1);
  FineSpaces s(g);
  TwoPhaseConfig cfg;
  cfg.linear_flux = true;
  cfg.cfl_safety = 1.0;
  Vec v = Vec::Zero(g.num_edges());
  for (int i = 0; i <= n; ++i) v[g.vedge(i, 0)] = 1.0;
  const Vec q = Vec::Zero(g.num_cells());
  Vec S = Vec::Zero(n);
  S[0] = 1.0;
  const double h = g.hx(), dt = 0.5 * h;
  CHECK(cfl_step(s, v, q, cfg) == doctest::Approx(h));
  // Hand recurrence S_i <- S_i - (dt/h)(S_i - S_{i-1}) with inflow value 1.
  Vec hand = S;
  for (int step = 0; step < 6; ++step) {
    const auto st = transport_step(s, S, v, q, cfg, dt);
    Vec next = hand;
    for (int i = 0; i < n; ++i) {
      const double up = i == 0 ? 1.0 : hand[i - 1];
      next[i] = hand[i] - dt / h * (hand[i] - up);
    }
    hand = next;
    S = st.S;
    CHECK((S - hand).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(st.mass_residual < 1e-14);
  }
  // Front still within the grid after 6 half-cell steps: it advances by one
  // donor-cell update per step.
  CHECK(S[0] == doctest::Approx(1.0));
  CHECK(S[3] > 0.0);
  CHECK(S[7] == 0.0);
  CHECK(hand[1] == doctest::Approx(1.0 - std::pow(0.5, 6)));
}

TEST_CASE("CFL violation names the limiting cell") {
  const int n = 8;
  GridHierarchy g(n, 1, 1, 1);
  FineSpaces s(g);
  TwoPhaseConfig cfg;
  cfg.linear_flux = true;
  Vec v = Vec::Zero(g.num_edges());
  v[g.vedge(5, 0)] = 2.0;  // outflow from cell 4 only
  const Vec q = Vec::Zero(n);
  int lim = -1;
  const double dt = cfl_step(s, v, q, cfg, &lim);
  CHECK(lim == 4);
  CHECK(dt == doctest::Approx(0.5 * g.hx() / 2.0));
  CHECK_NOTHROW(transport_step(s, Vec::Zero(n), v, q, cfg, dt));
  try {
    transport_step(s, Vec::Zero(n), v, q, cfg, 1.01 * dt);
    FAIL("expected a CFL error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cell 4") != std::string::npos);
  }
}

TEST_CASE("fine IMPES keeps the maximum principle and mass balance") {
  GridHierarchy g(12, 12, 3, 3);
  FineSpaces s(g);
  set_two_spot(s);
  const Vec kinv = lognormal_kinv(g.num_cells(), 3, 1.5);
  FlowSolver flow(s);
  TwoPhaseConfig cfg;
  cfg.record_times = {100, 300, 600, 1200};
  const auto r = simulate(flow, kinv, cfg);
  CHECK(r.min_S >= 0.0);
  CHECK(r.max_S <= 1.0);
  CHECK(r.max_mass_residual <= 1e-10);
  for (int k = 0; k < r.watercut.size(); ++k) {
    CHECK(r.watercut[k] >= 0.0);
    CHECK(r.watercut[k] <= 1.0);
  }
  CHECK(r.watercut[0] < r.watercut[3]);
}

TEST_CASE("impes step uses the mobility-scaled coefficient") {
  GridHierarchy g(8, 8, 2, 2);
  FineSpaces s(g);
  const Vec q = set_two_spot(s);
  const Vec kinv = lognormal_kinv(g.num_cells(), 5, 1.0);
  FlowSolver flow(s);
  TwoPhaseConfig cfg;
  TwoPhaseState st;
  st.S = Vec::LinSpaced(g.num_cells(), 0.0, 1.0);
  Vec w(g.num_cells());
  for (int c = 0; c < w.size(); ++c) w[c] = kinv[c] / mobility(st.S[c], cfg);
  const Vec v = solve_fine_kinv(s, w).v;
  const double dt = 0.5 * cfl_step(s, v, q, cfg);
  TransportStep info;
  const auto next = impes_step(st, flow, kinv, q, cfg, dt, &info);
  CHECK((next.v - v).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(next.t == doctest::Approx(dt));
  const auto direct = transport_step(s, st.S, v, q, cfg, dt);
  CHECK((next.S - direct.S).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(info.mass_residual < 1e-12);
}

TEST_CASE("T = 0 gives the initial state") {
  GridHierarchy g(6, 6, 2, 2);
  FineSpaces s(g);
  set_two_spot(s);
  FlowSolver flow(s);
  TwoPhaseConfig cfg;
  cfg.record_times = {0.0};
  const auto r = simulate(flow, Vec::Ones(g.num_cells()), cfg);
  CHECK(r.steps == 0);
  CHECK(r.saturation.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.watercut[0] == 0.0);
}

TEST_CASE("simulate rejects a mismatched source and bad record times") {
  GridHierarchy g(6, 6, 2, 2);
  FineSpaces s(g);
  FlowSolver flow(s);
  TwoPhaseConfig cfg;
  CHECK_THROWS_AS(simulate(flow, Vec::Ones(g.num_cells()), cfg), ConfigError);
  set_two_spot(s);
  cfg.record_times = {10, 5};
  CHECK_THROWS_AS(simulate(flow, Vec::Ones(g.num_cells()), cfg), ConfigError);
}

TEST_CASE("reduced flow: sparse local path matches the orthonormal path") {
  GridHierarchy g(12, 12, 3, 3);
  FineSpaces s(g);
  set_two_spot(s);
  const Vec kinv = lognormal_kinv(g.num_cells(), 9, 1.0);
  ReducedContext ctx(s, AffineDecomposition::constant(kinv), 3);
  const auto lib = build_library(ctx, {Vec::Zero(1)});
  const auto pod = pod_build(ctx, lib, 3);
  FlowSolver flow(s, pod.space);
  CHECK(flow.reduced());
  TwoPhaseConfig cfg;
  const Vec S = Vec::LinSpaced(g.num_cells(), 0.0, 1.0);
  Vec w(g.num_cells());
  for (int c = 0; c < w.size(); ++c) w[c] = kinv[c] / mobility(S[c], cfg);
  const Vec a = flow.velocity(w), b = flow.velocity_dense(w);
  CHECK((a - b).norm() <= 1e-9 * b.norm());
  // Reduced velocities are locally conservative on the coarse blocks.
  const Vec div = ctx.pressure().transpose() * (s.B() * a - s.F());
  CHECK(div.cwiseAbs().maxCoeff() < 1e-10);
  const auto r = simulate(flow, kinv, cfg);
  CHECK(r.min_S >= 0.0);
  CHECK(r.max_S <= 1.0);
  CHECK(r.max_mass_residual <= 1e-10);
}

TEST_CASE("ensemble statistics") {
  Mat two(3, 2);
  two.col(0).setZero();
  two.col(1).setConstant(2.0);
  const auto st = ensemble_stats(two);
  CHECK((st.mean.array() == 1.0).all());
  CHECK((st.variance.array() == 2.0).all());
  Mat same = Vec::LinSpaced(4, 0.0, 3.0).replicate(1, 5);
  CHECK(ensemble_stats(same).variance.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(ensemble_stats(Mat::Ones(3, 1)), ConfigError);
}

TEST_CASE("saturation errors") {
  const Vec areas = Vec::Constant(2, 0.5);
  Mat ref(4, 2), app(4, 2);
  // Two cells, two times; sample columns.
  ref << 1, 2, 1, 2, 0.5, 1, 0.5, 1;
  app = ref;
  app(0, 0) = 0.0;    // time 0, sample 0: |1| of |2| off
  app(3, 1) = 0.0;    // time 1, sample 1: |1| of |2| off
  const Vec e = saturation_errors(ref, app, areas, 2);
  CHECK(e[0] == doctest::Approx(0.25));
  CHECK(e[1] == doctest::Approx(0.25));
  CHECK_THROWS_AS(saturation_errors(ref, app, areas, 3), ConfigError);
}

TEST_CASE("deterministic ensemble gives a one-term surrogate") {
  const int cells = 9, nt = 3, ns = 12;
  Mat snaps(cells * nt, ns);
  const Vec base = Vec::LinSpaced(cells * nt, 0.0, 1.0);
  for (int j = 0; j < ns; ++j) snaps.col(j) = base;
  Rng rng(4);
  Mat params(ns, 2);
  for (int j = 0; j < ns; ++j) params.row(j) << rng.normal(), rng.normal();
  const PolynomialBasis pb(PolyFamily::Hermite, 2, 2);
  const auto design = random_design(cells * nt, 10, ns, ns, rng);
  const auto rep = saturation_surrogate(snaps, Vec::Constant(cells, 1.0 / cells), nt, params, 4, pb, design, 1e-8);
  CHECK(rep.modes.cols() == 1);
  CHECK(rep.Mt() == 1);
  CHECK((rep.eval(params.row(0).transpose()) - base).norm() < 1e-10);

  Mat wc = Vec::Constant(5, 0.3).replicate(1, ns);
  const auto d2 = random_design(5, 5, ns, ns, rng);
  const auto wrep = watercut_surrogate(wc, params, 6, pb, d2, 1e-8);
  CHECK(wrep.Mt() == 1);
}

TEST_CASE("surrogate of a polynomial saturation family is recovered") {
  const int cells = 6, nt = 2, ns = 40;
  Rng rng(11);
  Mat g1(cells * nt, 1), g2(cells * nt, 1);
  for (int i = 0; i < cells * nt; ++i) {
    g1(i, 0) = 0.5 + 0.1 * i;
    g2(i, 0) = std::sin(1.0 + i);
  }
  Mat params(ns, 2), snaps(cells * nt, ns);
  for (int j = 0; j < ns; ++j) {
    params.row(j) << rng.normal(), rng.normal();
    snaps.col(j) = g1.col(0) + 0.2 * params(j, 0) * params(j, 1) * g2.col(0);
  }
  const PolynomialBasis pb(PolyFamily::Hermite, 2, 2);
  const auto design = random_design(cells * nt, cells * nt, ns, ns, rng);
  const auto rep = saturation_surrogate(snaps, Vec::Constant(cells, 1.0), nt, params, 4, pb, design, 1e-10);
  CHECK(rep.Mt() <= 4);
  for (int j = 0; j < 5; ++j) CHECK((rep.eval(params.row(j).transpose()) - snaps.col(j)).norm() < 1e-8);
}

}  // TEST_SUITE
