#include "rmgms/separation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace rmgms {

namespace {

// Recurrence coefficient of the orthonormal family: x q_n = b_{n+1} q_{n+1} + b_n q_{n-1}.
double recurrence_b(PolyFamily f, int n) {
  if (f == PolyFamily::Legendre) return n / std::sqrt(4.0 * n * n - 1.0);
  return std::sqrt(static_cast<double>(n));
}

void enumerate(int p, int degree, std::vector<int>& cur, int coord, int left,
               std::vector<std::vector<int>>& out) {
  if (coord == p) {
    out.push_back(cur);
    return;
  }
  for (int d = 0; d <= left; ++d) {
    cur[coord] = d;
    enumerate(p, degree, cur, coord + 1, left - d, out);
  }
  cur[coord] = 0;
}

}  // namespace

std::string to_string(PolyFamily f) { return f == PolyFamily::Legendre ? "legendre" : "hermite"; }

PolyFamily poly_family_from_string(const std::string& s) {
  if (s == "legendre") return PolyFamily::Legendre;
  if (s == "hermite") return PolyFamily::Hermite;
  throw ConfigError("unknown polynomial family '" + s + "'");
}

Vec orthonormal_poly_1d(PolyFamily f, int n, double x) {
  Vec q(n + 1);
  q[0] = 1.0;
  if (n >= 1) q[1] = x / recurrence_b(f, 1);
  for (int k = 1; k < n; ++k)
    q[k + 1] = (x * q[k] - recurrence_b(f, k) * q[k - 1]) / recurrence_b(f, k + 1);
  return q;
}

std::pair<Vec, Vec> gauss_rule(PolyFamily f, int npts) {
  Mat J = Mat::Zero(npts, npts);
  for (int k = 1; k < npts; ++k) J(k, k - 1) = J(k - 1, k) = recurrence_b(f, k);
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  Vec w = es.eigenvectors().row(0).transpose().array().square();
  return {es.eigenvalues(), w};
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

PolynomialBasis::PolynomialBasis(PolyFamily family, int p, int degree)
    : family_(family), p_(p), degree_(degree) {
  if (p < 1 || degree < 0) throw ConfigError("polynomial basis needs p >= 1 and degree >= 0");
  std::vector<std::vector<int>> all;
  std::vector<int> cur(p, 0);
  enumerate(p, degree, cur, 0, degree, all);
  std::stable_sort(all.begin(), all.end(), [](const std::vector<int>& a, const std::vector<int>& b) {
    int sa = 0, sb = 0;
    for (int v : a) sa += v;
    for (int v : b) sb += v;
    if (sa != sb) return sa < sb;
    return a < b;
  });
  index_.reserve(all.size());
  for (const auto& a : all) {
    std::vector<std::pair<int, int>> s;
    for (int c = 0; c < p; ++c)
      if (a[c] > 0) s.emplace_back(c, a[c]);
    index_.push_back(std::move(s));
  }
}

std::vector<int> PolynomialBasis::multi_index(int i) const {
  std::vector<int> a(p_, 0);
  for (auto [c, d] : index_[i]) a[c] = d;
  return a;
}

void PolynomialBasis::tables(const Vec& mu, Mat& t) const {
  if (mu.size() != p_) throw ConfigError("parameter dimension mismatch in polynomial evaluation");
  t.resize(degree_ + 1, p_);
  for (int c = 0; c < p_; ++c) t.col(c) = orthonormal_poly_1d(family_, degree_, mu[c]);
}

double PolynomialBasis::member(const Mat& t, int i) const {
  double v = 1.0;
  for (auto [c, d] : index_[i]) v *= t(d, c);
  return v;
}

Vec PolynomialBasis::eval(const Vec& mu) const {
  Mat t;
  tables(mu, t);
  Vec out(size());
  for (int i = 0; i < size(); ++i) out[i] = member(t, i);
  return out;
}

Vec PolynomialBasis::eval(const Vec& mu, const std::vector<int>& members) const {
  Mat t;
  tables(mu, t);
  Vec out(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) out[k] = member(t, members[k]);
  return out;
}

Mat PolynomialBasis::eval_many(const Mat& mus) const {
  Mat out(mus.rows(), size());
  Mat t;
  for (int r = 0; r < mus.rows(); ++r) {
    tables(mus.row(r).transpose(), t);
    for (int i = 0; i < size(); ++i) out(r, i) = member(t, i);
  }
  return out;
}

}  // namespace rmgms
