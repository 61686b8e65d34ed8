#include <doctest.h>

#include "rmgms/reduced.hpp"

#include <cmath>

using namespace rmgms;

namespace {

// k^{-1}(mu) = k0 + mu_1 k1 + mu_2 k2 with mu in [-1, 1]^2.
AffineDecomposition two_term(int cells, std::uint64_t seed) {
  Rng rng(seed);
  Vec k0(cells), k1(cells), k2(cells);
  for (int c = 0; c < cells; ++c) {
    k0[c] = std::exp(rng.uniform(-1.5, 1.5));
    k1[c] = rng.uniform(0.0, 0.4) * k0[c];
    k2[c] = rng.uniform(-0.4, 0.4) * k0[c];
  }
  PolynomialBasis pb(PolyFamily::Legendre, 2, 1);
  std::vector<AffineTerm> t{{k0, {{0, 1.0}}}};
  for (int i = 1; i < 3; ++i) {
    const auto mi = pb.multi_index(i);
    t.push_back({mi[0] == 1 ? k1 : k2, {{i, 1.0 / std::sqrt(3.0)}}});
  }
  return AffineDecomposition(pb, t, 0.0);
}

void smooth_source(FineSpaces& s) {
  s.set_source([](double x, double y) { return (y - 0.5) * std::cos(M_PI * (x - 0.5)); });
}

Mat random_mus(int n, int p, Rng& rng) {
  Mat m(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST_SUITE("reduced") {

TEST_CASE("fine-spanning reduced space reproduces the fine solve") {
  // Coarse blocks equal to fine cells make the pressure spaces coincide.
  GridHierarchy g(5, 5, 5, 5);
  FineSpaces s(g);
  smooth_source(s);
  const auto ad = two_term(g.num_cells(), 3);
  ReducedContext ctx(s, ad, 1);
  const auto rs = make_reduced_space(ctx, s.interior_selector(), BasisKind::Custom);
  CHECK(rs.size() == static_cast<int>(s.interior_edges().size()));
  const Vec mu = Vec::Constant(2, 0.3);
  const auto ref = solve_fine(s, ad, mu);
  const auto f = reconstruct(rs, reduced_solve(rs, ad, mu));
  CHECK((f.v - ref.v).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((f.p - ref.p).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("reduced blocks, orthonormality and reconstruction") {
  GridHierarchy g(12, 12, 3, 3);
  FineSpaces s(g);
  smooth_source(s);
  const auto ad = two_term(g.num_cells(), 5);
  ReducedContext ctx(s, ad, 3);
  Rng rng(9);
  const Mat mus = random_mus(3, 2, rng);
  const auto lib = build_library(ctx, {mus.row(0).transpose(), mus.row(1).transpose()});
  CHECK(lib.min_snap() == 6);
  CHECK(lib.num_groups() == 6);
  const auto pod = pod_build(ctx, lib, 4);
  const auto& rs = pod.space;
  CHECK(rs.size() == 4 * static_cast<int>(ctx.edges().size()));
  const Mat I = rs.Z.transpose() * s.gram_v() * rs.Z;
  CHECK((I - Mat::Identity(rs.size(), rs.size())).cwiseAbs().maxCoeff() <= 1e-8);

  const Vec mu = mus.row(2).transpose();
  const auto a = reduced_solve(rs, ad, mu);
  const auto b = reduced_solve_kinv(rs, s, ad.kinv(mu));
  CHECK((a.v - b.v).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + a.v.cwiseAbs().maxCoeff()));
  CHECK((a.p - b.p).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + a.p.cwiseAbs().maxCoeff()));
  for (std::size_t q = 0; q < rs.MN.size(); ++q) {
    const Mat direct = rs.Z.transpose() * ctx.mass_blocks()[q] * rs.Z;
    CHECK((rs.MN[q] - direct).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + direct.cwiseAbs().maxCoeff()));
  }
  // B_N v = F_N holds for the reduced velocity.
  CHECK((rs.BN * a.v - rs.FN).cwiseAbs().maxCoeff() <= 1e-9);

  ReducedSolution zero{Vec::Zero(rs.size()), Vec::Zero(rs.num_blocks()), mu};
  const auto fz = reconstruct(rs, zero);
  CHECK(fz.v.norm() == 0.0);
  CHECK(fz.p.norm() == 0.0);
  ReducedSolution unit = zero;
  unit.v[0] = 1.0;
  CHECK((reconstruct(rs, unit).v - rs.Z.col(0)).norm() == 0.0);

  // Projection distance against a normal-equation oracle on the local vectors.
  const Vec w = lib.group(5, s.num_edges()) * Vec::Ones(ctx.edges().size());
  const Vec c = project(rs, s, w);
  const Mat K = Mat(rs.X.transpose() * s.gram_v() * rs.X);
  const Vec coef = K.ldlt().solve(rs.X.transpose() * (s.gram_v() * w));
  const Vec best = rs.X * coef;
  const double oracle = hdiv_norm(s, w - best);
  CHECK(hdiv_norm(s, w - rs.Z * c) == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(std::sqrt(std::max(0.0, hdiv_norm(s, w) * hdiv_norm(s, w) - c.squaredNorm())) ==
        doctest::Approx(oracle).epsilon(1e-5));
}

TEST_CASE("zero data give zero reduced coefficients") {
  GridHierarchy g(8, 8, 2, 2);
  FineSpaces s(g);
  const auto ad = two_term(g.num_cells(), 1);
  ReducedContext ctx(s, ad, 2);
  const auto lib = build_library(ctx, {Vec::Zero(2)});
  const auto rs = pod_build(ctx, lib, 2).space;
  const auto sol = reduced_solve(rs, ad, Vec::Constant(2, 0.5));
  CHECK(sol.v.norm() == 0.0);
  CHECK(sol.p.norm() == 0.0);
}

TEST_CASE("relative error averaging") {
  GridHierarchy g(4, 4, 2, 2);
  FineSpaces s(g);
  Rng rng(1);
  FineFields r1{Vec::Random(s.num_edges()), Vec::Random(s.num_cells())};
  FineFields r2{Vec::Random(s.num_edges()), Vec::Random(s.num_cells())};
  CHECK(relative_errors(s, {r1}, {r1}).velocity == 0.0);
  FineFields d{2.0 * r1.v, 2.0 * r1.p};
  CHECK(relative_errors(s, {r1}, {d}).velocity == doctest::Approx(1.0));
  CHECK(relative_errors(s, {r1}, {d}).pressure == doctest::Approx(1.0));
  FineFields a1{1.1 * r1.v, r1.p}, a2{0.7 * r2.v, r2.p};
  CHECK(relative_errors(s, {r1, r2}, {a1, a2}).velocity == doctest::Approx(0.2));
  CHECK_THROWS_AS(relative_errors(s, {r1}, {}), ConfigError);
}

TEST_CASE("error bound formula") {
  const auto z = error_bounds(0.0, 0.0, 1.0, 1.0, 1.0);
  CHECK(z.velocity == 0.0);
  CHECK(z.pressure == 0.0);
  CHECK(error_bounds(1.0, 0.0, 2.0, 5.0, 1.0).velocity == doctest::Approx(0.5));
  const auto b = error_bounds(1.0, 2.0, 2.0, 4.0, 0.5);
  CHECK(b.velocity == doctest::Approx(0.5 + 3.0 * 4.0));
  CHECK(b.pressure == doctest::Approx(2.0 + 8.0 * b.velocity));
  CHECK_THROWS_AS(error_bounds(1.0, 1.0, 1.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("stability constants: bounds against dense eigensolves") {
  GridHierarchy g(8, 6, 2, 2);
  FineSpaces s(g);
  const auto exact = stability_constants(s);
  const auto bound = stability_constants(s, 0);
  CHECK(exact.exact);
  CHECK_FALSE(bound.exact);
  CHECK(exact.c_V > 0.0);
  CHECK(bound.c_V <= exact.c_V);
  CHECK(exact.C_V <= 1.0 + 1e-12);
  CHECK(bound.beta == doctest::Approx(exact.beta).epsilon(1e-6));
  CHECK(exact.beta > 0.0);
  CHECK(exact.beta <= 1.0);
}

TEST_CASE("estimator: cached tables agree with direct Riesz solves") {
  GridHierarchy g(12, 12, 3, 3);
  FineSpaces s(g);
  smooth_source(s);
  const auto ad = two_term(g.num_cells(), 8);
  ReducedContext ctx(s, ad, 2);
  const auto sc = stability_constants(s);
  Rng rng(4);
  const auto lib = build_library(ctx, {Vec::Zero(2), Vec::Constant(2, 0.7)});
  const auto rs = pod_build(ctx, lib, 3).space;
  const ErrorEstimator cached(ctx, rs, sc, EstimatorMode::Cached);
  const ErrorEstimator direct(ctx, rs, sc, EstimatorMode::Direct);
  CHECK(cached.cached());
  CHECK_FALSE(direct.cached());
  const Mat mus = random_mus(5, 2, rng);
  for (int i = 0; i < 5; ++i) {
    const auto sol = reduced_solve(rs, ad, mus.row(i).transpose());
    const auto a = cached.residuals(sol), b = direct.residuals(sol);
    CHECK(a.v == doctest::Approx(b.v).epsilon(1e-9));
    CHECK(a.p == doctest::Approx(b.p).epsilon(1e-9));
  }
}

TEST_CASE("estimator: empty space and exact reproduction") {
  GridHierarchy g(5, 5, 5, 5);
  FineSpaces s(g);
  smooth_source(s);
  const auto ad = two_term(g.num_cells(), 2);
  ReducedContext ctx(s, ad, 1);
  const auto sc = stability_constants(s);
  const auto empty = make_reduced_space(ctx, SpMat(s.num_edges(), 0), BasisKind::Custom);
  const ErrorEstimator e0(ctx, empty, sc, EstimatorMode::Cached);
  const Vec mu = Vec::Constant(2, -0.2);
  const auto r0 = e0.residuals(reduced_solve(empty, ad, mu));
  const double cc = s.F().dot(s.areas().cwiseInverse().asDiagonal() * s.F());
  CHECK(r0.p == doctest::Approx(std::sqrt(cc)));
  CHECK(r0.v == doctest::Approx(0.0));

  // One fine edge per coarse edge: the GMsFE space at mu is the fine space.
  const auto rs = pod_build(ctx, build_library(ctx, {mu}), 1).space;
  for (auto mode : {EstimatorMode::Cached, EstimatorMode::Direct}) {
    const ErrorEstimator est(ctx, rs, sc, mode);
    const auto r = est.residuals(reduced_solve(rs, ad, mu));
    CHECK(r.v <= 1e-8 * std::sqrt(cc));
    CHECK(r.p <= 1e-8 * std::sqrt(cc));
  }
}

TEST_CASE("estimator bounds the true velocity error") {
  GridHierarchy g(8, 8, 2, 2);
  FineSpaces s(g);
  smooth_source(s);
  const auto ad = two_term(g.num_cells(), 6);
  ReducedContext ctx(s, ad, 2);
  const auto sc = stability_constants(s);
  REQUIRE(sc.exact);
  const auto rs = pod_build(ctx, build_library(ctx, {Vec::Zero(2)}), 2).space;
  const ErrorEstimator est(ctx, rs, sc);
  Rng rng(12);
  const Mat mus = random_mus(20, 2, rng);
  for (int i = 0; i < 20; ++i) {
    const Vec mu = mus.row(i).transpose();
    const auto sol = reduced_solve(rs, ad, mu);
    const auto ref = solve_fine(s, ad, mu);
    const auto f = reconstruct(rs, sol);
    const auto d = est.estimate(sol);
    CHECK(d.velocity >= hdiv_norm(s, ref.v - f.v));
    CHECK(d.pressure >= pressure_l2_norm(s, ref.p - f.p));
  }
}

TEST_CASE("POD of hand-built libraries") {
  GridHierarchy g(6, 6, 2, 1);
  FineSpaces s(g);
  const auto ad = AffineDecomposition::constant(Vec::Ones(g.num_cells()));
  ReducedContext ctx(s, ad, 2);
  const auto real = build_library(ctx, {Vec::Zero(1)});
  REQUIRE(real.edges.size() == 1);
  const LocalVectors& base = real.per_edge[0];
  const int nd = static_cast<int>(base.dofs.size());
  const SpMat S = [&] {
    std::vector<Triplet> t;
    for (int r = 0; r < nd; ++r) t.emplace_back(base.dofs[r], r, 1.0);
    SpMat m(s.num_edges(), nd);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }();
  const Mat G = Mat(S.transpose() * s.gram_v() * S);
  auto lib_with = [&](const Mat& values) {
    SnapshotLibrary lib;
    lib.edges = real.edges;
    lib.per_edge = {LocalVectors{base.dofs, values}};
    return lib;
  };

  SUBCASE("orthonormal snapshots come back unchanged in span") {
    const Mat Y = base.values.leftCols(2);
    Eigen::LLT<Mat> llt(Y.transpose() * G * Y);
    const Mat Q = llt.matrixU().solve<Eigen::OnTheRight>(Y);
    const auto pod = pod_build(ctx, lib_with(Q), 2);
    CHECK(pod.eigenvalues[0][0] == doctest::Approx(1.0));
    CHECK(pod.eigenvalues[0][1] == doctest::Approx(1.0));
    const Mat Zl = S.transpose() * pod.space.Z;
    const Mat coef = (Q.transpose() * G * Q).ldlt().solve(Q.transpose() * G * Zl);
    CHECK((Q * coef - Zl).norm() <= 1e-10);
  }
  SUBCASE("a vector and its double give a single mode") {
    Mat Y(nd, 2);
    Y.col(0) = base.values.col(0);
    Y.col(1) = 2.0 * base.values.col(0);
    const auto pod = pod_build(ctx, lib_with(Y), 2);
    CHECK(pod.modes[0] == 1);
    CHECK(std::abs(pod.eigenvalues[0][1]) <= 1e-12 * pod.eigenvalues[0][0]);
    CHECK(pod.space.size() == 1);
    const Vec z = S.transpose() * pod.space.Z.col(0);
    CHECK(std::abs(z.dot(G * base.values.col(0))) ==
          doctest::Approx(std::sqrt(base.values.col(0).dot(G * base.values.col(0)))));
  }
  SUBCASE("random four-snapshot set") {
    Rng rng(3);
    Mat C(2, 4);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 4; ++j) C(i, j) = rng.normal();
    const Mat Y = base.values * C + 1e-3 * Mat::Random(nd, 4) * 0.0;
    Mat Y4(nd, 4);
    for (int j = 0; j < 4; ++j) Y4.col(j) = Y.col(j);
    const Mat aleph = Y4.transpose() * G * Y4;
    const auto pod = pod_build(ctx, lib_with(Y4), 2);
    const Vec& lam = pod.eigenvalues[0];
    for (int k = 1; k < lam.size(); ++k) CHECK(lam[k] <= lam[k - 1]);
    CHECK(lam.sum() == doctest::Approx(aleph.trace()));
    for (int j = 0; j < 2; ++j) {
      const Vec psi = S.transpose() * pod.space.Z.col(j);
      CHECK(psi.dot(G * psi) == doctest::Approx(1.0).epsilon(1e-10));
    }
    // Eigen-residual of the per-edge problem.
    Eigen::SelfAdjointEigenSolver<Mat> es(aleph);
    const Vec v = es.eigenvectors().col(3);
    CHECK((aleph * v - lam[0] * v).norm() <= 1e-10 * lam[0]);
  }
  CHECK_THROWS_AS(pod_build(ctx, real, 3), ConfigError);
}

TEST_CASE("BOCV selection") {
  GridHierarchy g(12, 12, 3, 3);
  FineSpaces s(g);
  smooth_source(s);
  const auto ad = two_term(g.num_cells(), 21);
  ReducedContext ctx(s, ad, 3);
  Rng rng(5);
  const Mat val = random_mus(3, 2, rng);
  std::vector<FineSolution> refs;
  for (int i = 0; i < 3; ++i) refs.push_back(ctx.fine(val.row(i).transpose()));

  SUBCASE("single group") {
    SnapshotLibrary lib = build_library(ctx, {Vec::Zero(2)});
    for (auto& e : lib.per_edge) e.values = e.values.leftCols(1).eval();
    const auto r = bocv_build(ctx, lib, refs, {});
    CHECK(r.groups == std::vector<int>{0});
    CHECK(r.space.size() == static_cast<int>(ctx.edges().size()));
  }
  SUBCASE("duplicates are not picked before novel groups; rounds are nested") {
    const Vec m0 = Vec::Constant(2, 0.1);
    const auto lib = build_library(ctx, {m0, m0, Vec::Constant(2, -0.8)});
    const auto r = bocv_build(ctx, lib, refs, {});
    REQUIRE(r.groups.size() == 9);
    // Groups g and g + 3 are identical; the copy is only taken once the
    // novel ones are exhausted or tie exactly.
    for (std::size_t k = 1; k < r.mean_error.size(); ++k) CHECK(r.mean_error[k] <= r.mean_error[k - 1] + 1e-12);
    for (std::size_t k = 0; k < r.groups.size(); ++k) {
      const int gk = r.groups[k];
      if (gk >= 3 && gk < 6) {
        const auto first = std::find(r.groups.begin(), r.groups.end(), gk - 3);
        CHECK(first < r.groups.begin() + k);
      }
    }
    MESSAGE("BOCV errors " << r.mean_error.front() << " -> " << r.mean_error.back());
  }
  SUBCASE("tolerance stops early") {
    const auto lib = build_library(ctx, {Vec::Zero(2), Vec::Constant(2, 0.9)});
    const auto full = bocv_build(ctx, lib, refs, {});
    BocvOptions o;
    o.eps_star = full.mean_error[1] * (1.0 + 1e-9);
    const auto r = bocv_build(ctx, lib, refs, o);
    CHECK(r.groups.size() == 2);
  }
}

TEST_CASE("greedy selection") {
  GridHierarchy g(8, 8, 2, 2);
  FineSpaces s(g);
  smooth_source(s);
  const auto sc = stability_constants(s);
  Rng rng(2);
  const Mat train = random_mus(12, 2, rng);
  GreedyOptions o;
  o.n_p = 2;

  SUBCASE("single training point") {
    ReducedContext ctx(s, two_term(g.num_cells(), 4), 2);
    const auto r = greedy_select(ctx, train.topRows(1), o, sc);
    CHECK(r.selected == std::vector<int>{0});
  }
  SUBCASE("parameter-independent coefficient stops after two picks") {
    Rng r2(1);
    Vec k(g.num_cells());
    for (int c = 0; c < k.size(); ++c) k[c] = std::exp(r2.uniform(-2.0, 2.0));
    ReducedContext ctx(s, AffineDecomposition::constant(k, 2), 2);
    const auto r = greedy_select(ctx, train, o, sc);
    CHECK(r.selected.size() <= 2);
  }
  SUBCASE("cap and distinct picks") {
    ReducedContext ctx(s, two_term(g.num_cells(), 4), 2);
    o.max_size = 4;
    const auto r = greedy_select(ctx, train, o, sc);
    CHECK(r.selected.size() <= 4);
    CHECK(r.selected[0] == 0);
    auto sorted = r.selected;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (std::size_t k = 1; k + 1 < r.eps.size(); ++k) CHECK(r.eps[k] < r.eps[k - 1]);
  }
  CHECK_THROWS_AS(greedy_select(ReducedContext(s, two_term(g.num_cells(), 4), 2), Mat(0, 2), o, sc), ConfigError);
}

TEST_CASE("estimator rejects a boundary flux") {
  GridHierarchy g(4, 4, 2, 2);
  FineSpaces s(g);
  Vec gout = Vec::Zero(g.num_edges());
  gout[s.boundary_edges()[0]] = 1.0;
  s.set_boundary_flux(gout);
  ReducedContext ctx(s, AffineDecomposition::constant(Vec::Ones(16)), 1);
  const auto rs = make_reduced_space(ctx, SpMat(s.num_edges(), 0), BasisKind::Custom);
  CHECK_THROWS_AS(ErrorEstimator(ctx, rs, stability_constants(s)), ConfigError);
}

}
