#include <doctest.h>

#include "rmgms/linalg.hpp"
#include "rmgms/separation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace rmgms;

namespace {

Mat gaussian(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// Best k-subset residual by exhaustive enumeration.
std::pair<std::vector<int>, double> best_subset(const Mat& P, const Vec& b, int k) {
  const int K = static_cast<int>(P.cols());
  std::vector<int> sel(K, 0);
  std::fill(sel.begin(), sel.begin() + k, 1);
  std::vector<int> best;
  double best_r = 1e300;
  do {
    std::vector<int> idx;
    for (int j = 0; j < K; ++j)
      if (sel[j]) idx.push_back(j);
    Mat S(P.rows(), k);
    for (int t = 0; t < k; ++t) S.col(t) = P.col(idx[t]);
    const double r = (S * least_squares(S, b) - b).norm();
    if (r < best_r) {
      best_r = r;
      best = idx;
    }
  } while (std::prev_permutation(sel.begin(), sel.end()));
  return {best, best_r};
}

}  // namespace

TEST_SUITE("separation") {

TEST_CASE("total-degree basis sizes") {
  CHECK(PolynomialBasis(PolyFamily::Legendre, 6, 5).size() == 462);
  CHECK(PolynomialBasis(PolyFamily::Legendre, 12, 4).size() == 1820);
  CHECK(PolynomialBasis(PolyFamily::Hermite, 20, 3).size() == 1771);
  for (int p = 1; p <= 5; ++p)
    for (int d = 0; d <= 5; ++d)
      CHECK(static_cast<std::uint64_t>(PolynomialBasis(PolyFamily::Legendre, p, d).size()) ==
            binomial(d + p, d));
}

TEST_CASE("multi-indices sorted by total degree then lexicographically") {
  PolynomialBasis b(PolyFamily::Legendre, 3, 3);
  for (int i = 1; i < b.size(); ++i) {
    const auto a = b.multi_index(i - 1), c = b.multi_index(i);
    int sa = 0, sc = 0;
    for (int v : a) sa += v;
    for (int v : c) sc += v;
    CHECK((sa < sc || (sa == sc && a < c)));
  }
  CHECK(b.multi_index(0) == std::vector<int>{0, 0, 0});
  CHECK(b.multi_index(1) == std::vector<int>{0, 0, 1});
}

TEST_CASE("1-D families are orthonormal under a 64-point Gauss rule") {
  for (auto fam : {PolyFamily::Legendre, PolyFamily::Hermite}) {
    const auto [x, w] = gauss_rule(fam, 64);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-13));
    const int n = 10;
    Mat G = Mat::Zero(n + 1, n + 1);
    for (int q = 0; q < 64; ++q) {
      const Vec v = orthonormal_poly_1d(fam, n, x[q]);
      G += w[q] * v * v.transpose();
    }
    CHECK((G - Mat::Identity(n + 1, n + 1)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  // Hand values: sqrt(3) x and He_2/sqrt(2).
  CHECK(orthonormal_poly_1d(PolyFamily::Legendre, 1, 0.5)[1] == doctest::Approx(std::sqrt(3.0) * 0.5));
  CHECK(orthonormal_poly_1d(PolyFamily::Hermite, 2, 2.0)[2] == doctest::Approx(3.0 / std::sqrt(2.0)));
}

TEST_CASE("snapshot KLE degenerate and symmetric cases") {
  Mat same(4, 3);
  same.colwise() = Vec(Eigen::Vector4d(1, 2, 3, 4));
  auto k = snapshot_kle(same, Vec(), {0.0, -1});
  CHECK(k.retained == 0);
  CHECK((k.mean - Vec(Eigen::Vector4d(1, 2, 3, 4))).norm() < 1e-14);

  // Two orthogonal snapshots of equal norm, mean removed, give equal energy
  // under centring of a symmetric triple.
  Mat S(3, 2);
  S << 1, -1, 0, 0, 0, 0;
  k = snapshot_kle(S, Vec(), {-1.0, -1});
  CHECK(k.retained == 1);
  Mat T(4, 4);
  T << 1, -1, 0, 0, 0, 0, 1, -1, 0, 0, 0, 0, 0, 0, 0, 0;
  k = snapshot_kle(T, Vec(), {-1.0, -1});
  CHECK(k.retained == 2);
  CHECK(k.eigenvalues[0] == doctest::Approx(k.eigenvalues[1]));
}

TEST_CASE("snapshot KLE reproduces training snapshots and modes are orthonormal") {
  Rng rng(5);
  const Mat X = gaussian(30, 8, rng);
  Vec w(30);
  for (int i = 0; i < 30; ++i) w[i] = 0.5 + rng.uniform();
  const auto k = snapshot_kle(X, w, {-1.0, -1});
  CHECK(k.retained == 7);  // centring removes one dimension
  CHECK((k.modes.transpose() * w.asDiagonal() * k.modes - Mat::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-8);
  for (int j = 0; j < 8; ++j) {
    Vec rec = k.mean;
    for (int i = 0; i < k.retained; ++i) rec += std::sqrt(k.eigenvalues[i]) * k.zeta(j, i) * k.modes.col(i);
    CHECK((rec - X.col(j)).norm() < 1e-8);
  }
  for (int i = 1; i < k.eigenvalues.size(); ++i) CHECK(k.eigenvalues[i] <= k.eigenvalues[i - 1]);
  const auto kt = snapshot_kle(X, w, {0.5, -1});
  const double total = k.eigenvalues.sum();
  CHECK(k.eigenvalues.tail(8 - kt.retained).sum() <= 0.5 * total);
  CHECK(k.eigenvalues.tail(8 - kt.retained + 1).sum() > 0.5 * total);
}

TEST_CASE("lsmos recovers a separated linear field") {
  Rng rng(9);
  const int nx = 20, nt = 12;
  Vec wx(nx);
  for (int i = 0; i < nx; ++i) wx[i] = std::sin(0.3 * i) + 0.1;
  Mat params(nt, 1), snaps(nx, nt);
  for (int j = 0; j < nt; ++j) {
    params(j, 0) = rng.uniform(-1, 1);
    snaps.col(j) = params(j, 0) * wx;
  }
  const auto rep = lsmos(snaps, Vec(), params, PolynomialBasis(PolyFamily::Legendre, 1, 1), {1e-12, -1});
  for (double mu : {-0.7, 0.1, 0.9}) {
    const Vec v = rep.eval(Vec::Constant(1, mu));
    CHECK((v - mu * wx).norm() <= 1e-10 * (1 + wx.norm()));
  }
}

TEST_CASE("lsmos exact recovery on the configured tensor space") {
  Rng rng(21);
  const PolynomialBasis basis(PolyFamily::Legendre, 2, 2);
  const Mat g = gaussian(15, 2, rng);
  const Mat c = gaussian(basis.size(), 2, rng);
  const int nt = 20;
  Mat params(nt, 2), snaps(15, nt);
  for (int j = 0; j < nt; ++j) {
    params.row(j) << rng.uniform(-1, 1), rng.uniform(-1, 1);
    const Vec p = basis.eval(params.row(j).transpose());
    snaps.col(j) = g * (c.transpose() * p);
  }
  const auto rep = lsmos(snaps, Vec(), params, basis, {-1.0, -1});
  Vec mu(2);
  mu << 0.3, -0.4;
  const Vec exact = g * (c.transpose() * basis.eval(mu));
  CHECK((rep.eval(mu) - exact).norm() <= 1e-8 * exact.norm());
}

TEST_CASE("lsmos constant-in-parameter field returns the mean") {
  Mat snaps(5, 6);
  snaps.colwise() = Vec::LinSpaced(5, 1, 2);
  Mat params = Mat::Random(6, 2);
  const auto rep = lsmos(snaps, Vec(), params, PolynomialBasis(PolyFamily::Legendre, 2, 2), {1e-6, -1});
  CHECK(rep.terms() == 0);
  CHECK((rep.eval(Vec::Zero(2)) - Vec::LinSpaced(5, 1, 2)).norm() < 1e-14);
}

TEST_CASE("omp single column") {
  Rng rng(1);
  const Mat P = gaussian(30, 10, rng);
  const Vec b = 3.0 * P.col(5);
  const auto r = omp(DenseDictionary(P), b, 1e-12);
  REQUIRE(r.support.size() == 1);
  CHECK(r.support[0] == 5);
  CHECK(r.coefficients[0] == doctest::Approx(3.0));
}

TEST_CASE("omp matches best-subset search on sparse signals") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Mat P = gaussian(30, 10, rng);
    Vec b = 1.5 * P.col(2) - 0.8 * P.col(7);
    const auto r = omp(DenseDictionary(P), b, 1e-12);
    const auto [bs, res] = best_subset(P, b, 2);
    std::vector<int> sup = r.support;
    std::sort(sup.begin(), sup.end());
    CHECK(sup == bs);
    CHECK(res < 1e-10);
  }
}

TEST_CASE("omp invariants: orthogonal residual, monotone, no repeats") {
  Rng rng(4);
  const Mat P = gaussian(40, 25, rng);
  const Vec b = gaussian(40, 1, rng).col(0);
  Vec r = b;
  // Re-run with growing caps to observe every iteration.
  double prev = 1.0;
  for (int m = 1; m <= 12; ++m) {
    const auto o = omp(DenseDictionary(P), b, 1e-14, m);
    std::set<int> uniq(o.support.begin(), o.support.end());
    CHECK(uniq.size() == o.support.size());
    Mat S(40, o.support.size());
    for (std::size_t t = 0; t < o.support.size(); ++t) S.col(t) = P.col(o.support[t]);
    r = b - S * o.coefficients;
    CHECK((S.transpose() * r).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(o.relative_residual <= prev + 1e-15);
    CHECK(r.norm() / b.norm() == doctest::Approx(o.relative_residual).epsilon(1e-9));
    prev = o.relative_residual;
  }
}

TEST_CASE("omp stops at full rank with a warning") {
  Rng rng(8);
  const Mat P = gaussian(10, 3, rng);
  const Vec b = gaussian(10, 1, rng).col(0);
  const auto o = omp(DenseDictionary(P), b, 1e-12);
  CHECK_FALSE(o.converged);
  CHECK(o.support.size() == 3);
  CHECK((P.transpose() * (b - P(Eigen::all, o.support) * o.coefficients)).norm() < 1e-10);
}

TEST_CASE("tensor dictionary agrees with the explicit Kronecker matrix") {
  Rng rng(6);
  const Mat G = gaussian(7, 3, rng), Pm = gaussian(5, 4, rng);
  const TensorDictionary td(G, Pm);
  Mat full(35, 12);
  for (int j = 0; j < 12; ++j) full.col(j) = td.column(j);
  for (int j = 0; j < 12; ++j) {
    const int i1 = j / 3, i2 = j % 3;
    for (int m = 0; m < 5; ++m)
      for (int x = 0; x < 7; ++x) CHECK(full(m * 7 + x, j) == doctest::Approx(Pm(m, i1) * G(x, i2)));
  }
  const Vec r = gaussian(35, 1, rng).col(0);
  CHECK((td.correlate(r) - full.transpose() * r).norm() < 1e-12);
  CHECK((td.column_norms() - full.colwise().norm().transpose()).norm() < 1e-12);
}

TEST_CASE("staomp finds a single separated term") {
  Rng rng(12);
  const PolynomialBasis basis(PolyFamily::Legendre, 2, 3);
  const int nx = 50, nt = 30;
  Vec g1(nx);
  for (int i = 0; i < nx; ++i) g1[i] = std::cos(0.1 * i) + 2.0;
  Mat params(nt, 2), snaps(nx, nt);
  for (int j = 0; j < nt; ++j) {
    params.row(j) << rng.uniform(-1, 1), rng.uniform(-1, 1);
    snaps.col(j) = basis.eval(params.row(j).transpose())[2] * g1;
  }
  const auto design = random_design(nx, 20, nt, 25, rng);
  const auto rep = staomp(snaps, Vec(), params, 1, basis, design, 1e-10);
  CHECK(rep.Mt() == 1);
  Vec mu(2);
  mu << 0.2, -0.5;
  CHECK((rep.eval(mu) - basis.eval(mu)[2] * g1).norm() < 1e-9 * g1.norm());
  CHECK(rep.eval_point(3, mu) == doctest::Approx(basis.eval(mu)[2] * g1[3]));
}

TEST_CASE("sparse rep evaluation edge cases") {
  SparseTensorRep rep;
  rep.basis = PolynomialBasis(PolyFamily::Legendre, 1, 2);
  rep.modes = Mat::Ones(4, 1);
  CHECK(rep.eval(Vec::Zero(1)).norm() == 0.0);
  rep.terms.push_back({0, 0, 2.5});
  CHECK((rep.eval(Vec::Constant(1, 0.3)) - Vec::Constant(4, 2.5)).norm() < 1e-15);
}

}
