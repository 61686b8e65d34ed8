#include "rmgms/separation.hpp"

#include "rmgms/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace rmgms {

namespace {

// Eigen-decomposition of the weighted snapshot Gram matrix, descending.
void snapshot_gram_eig(const Mat& X, const Vec& weights, Vec& lambda, Mat& E) {
  const Mat C = X.transpose() * weights.asDiagonal() * X / static_cast<double>(X.cols());
  Eigen::SelfAdjointEigenSolver<Mat> es(C);
  if (es.info() != Eigen::Success) throw NumericalFailure("snapshot covariance eigensolve failed");
  lambda = es.eigenvalues().reverse().cwiseMax(0.0);
  E = es.eigenvectors().rowwise().reverse();
}

int numerical_rank(const Vec& lambda) {
  if (lambda.size() == 0 || lambda[0] <= 0.0) return 0;
  int r = 0;
  while (r < lambda.size() && lambda[r] > 1e-13 * lambda[0]) ++r;
  return r;
}

Vec check_weights(const Vec& weights, Eigen::Index n) {
  if (weights.size() == 0) return Vec::Ones(n);
  if (weights.size() != n) throw ConfigError("spatial weight vector has the wrong length");
  return weights;
}

}  // namespace

SnapshotKLE snapshot_kle(const Mat& snapshots, const Vec& weights_in, TruncationRule rule) {
  if (snapshots.cols() < 1) throw ConfigError("snapshot KLE needs at least one snapshot");
  const Vec w = check_weights(weights_in, snapshots.rows());
  const double nt = static_cast<double>(snapshots.cols());
  SnapshotKLE k;
  k.mean = snapshots.rowwise().mean();
  const Mat X = snapshots.colwise() - k.mean;
  Mat E;
  snapshot_gram_eig(X, w, k.eigenvalues, E);
  const int rank = numerical_rank(k.eigenvalues);
  int M = rank;
  if (rule.count >= 0) {
    M = std::min(rule.count, rank);
  } else if (rule.tail_tol >= 0.0 && rank > 0) {
    const double total = k.eigenvalues.sum();
    double tail = total;
    M = 0;
    while (M < rank && tail > rule.tail_tol * total) tail -= k.eigenvalues[M++];
  }
  k.retained = M;
  k.modes.resize(snapshots.rows(), M);
  for (int i = 0; i < M; ++i)
    k.modes.col(i) = X * E.col(i) / std::sqrt(k.eigenvalues[i] * nt);
  k.zeta = X.transpose() * w.asDiagonal() * k.modes;
  for (int i = 0; i < M; ++i) k.zeta.col(i) /= std::sqrt(k.eigenvalues[i]);
  return k;
}

PodModes pod_modes(const Mat& snapshots, const Vec& weights_in, int n) {
  const Vec w = check_weights(weights_in, snapshots.rows());
  Vec lambda;
  Mat E;
  snapshot_gram_eig(snapshots, w, lambda, E);
  const int m = std::min(n, numerical_rank(lambda));
  PodModes out;
  out.eigenvalues = lambda;
  out.modes.resize(snapshots.rows(), m);
  const double nt = static_cast<double>(snapshots.cols());
  for (int i = 0; i < m; ++i) out.modes.col(i) = snapshots * E.col(i) / std::sqrt(lambda[i] * nt);
  if (m < n) warn("POD returned " + std::to_string(m) + " of " + std::to_string(n) + " requested modes");
  return out;
}

Vec SeparatedRep::eval(const Vec& mu) const {
  if (terms() == 0) return mean;
  const Vec p = basis.eval(mu);
  const Vec z = (coeffs.transpose() * p).cwiseProduct(sqrt_lambda);
  return mean + modes * z;
}

SeparatedRep SeparatedRep::truncated(int M) const {
  SeparatedRep r = *this;
  M = std::min(M, terms());
  r.modes = modes.leftCols(M);
  r.sqrt_lambda = sqrt_lambda.head(M);
  r.coeffs = coeffs.leftCols(M);
  return r;
}

SeparatedRep lsmos(const Mat& snapshots, const Vec& weights, const Mat& params,
                   const PolynomialBasis& basis, TruncationRule rule) {
  if (params.rows() != snapshots.cols()) throw ConfigError("lsmos: one parameter row per snapshot");
  const SnapshotKLE k = snapshot_kle(snapshots, weights, rule);
  SeparatedRep r;
  r.mean = k.mean;
  r.modes = k.modes;
  r.sqrt_lambda = k.eigenvalues.head(k.retained).cwiseSqrt();
  r.basis = basis;
  r.n_t = static_cast<int>(snapshots.cols());
  if (k.retained == 0) {
    r.coeffs.resize(basis.size(), 0);
    return r;
  }
  if (r.n_t < basis.size())
    warn("lsmos: " + std::to_string(r.n_t) + " samples for " + std::to_string(basis.size()) +
         " basis functions, using the minimum-norm solution");
  const Mat A = basis.eval_many(params);
  r.coeffs = least_squares(A, k.zeta);
  return r;
}

Vec TensorDictionary::column(int j) const {
  const int N = modes();
  const int i1 = j / N, i2 = j % N;
  const Eigen::Index nx = G_.rows(), nmu = P_.rows();
  Vec c(nx * nmu);
  for (Eigen::Index m = 0; m < nmu; ++m) c.segment(m * nx, nx) = P_(m, i1) * G_.col(i2);
  return c;
}

Vec TensorDictionary::correlate(const Vec& r) const {
  const Eigen::Map<const Mat> R(r.data(), G_.rows(), P_.rows());
  const Mat C = G_.transpose() * R * P_;  // N x M_g
  return Eigen::Map<const Vec>(C.data(), C.size());
}

Vec TensorDictionary::column_norms() const {
  const Vec gn = G_.colwise().norm().transpose();
  const Vec pn = P_.colwise().norm().transpose();
  const Mat C = gn * pn.transpose();
  return Eigen::Map<const Vec>(C.data(), C.size());
}

OmpResult omp(const Dictionary& dict, const Vec& b, double eps, int max_terms) {
  const int n = dict.rows(), K = dict.cols();
  if (b.size() != n) throw ConfigError("omp: right-hand side length mismatch");
  const bool user_cap = max_terms >= 0;
  if (!user_cap) max_terms = std::min(n, K);
  OmpResult res;
  bool capped = false;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.relative_residual = 0.0;
    res.converged = true;
    return res;
  }
  const Vec norms = dict.column_norms();
  std::vector<char> blocked(K, 0);
  for (int j = 0; j < K; ++j)
    if (!(norms[j] > 0.0)) blocked[j] = 1;

  // Storage grows by doubling; the active factor is the leading k columns.
  Mat Q(n, 0), R(0, 0);
  Vec qtb(0);
  Eigen::Index k = 0;
  Vec r = b;
  res.relative_residual = 1.0;
  res.residual_history.push_back(1.0);
  while (true) {
    if (res.relative_residual < eps) {
      res.converged = true;
      break;
    }
    if (static_cast<int>(res.support.size()) >= max_terms) {
      capped = user_cap;
      break;
    }
    const Vec corr = dict.correlate(r);
    int best = -1;
    double best_score = 0.0;
    for (int j = 0; j < K; ++j) {
      if (blocked[j]) continue;
      const double s = std::abs(corr[j]) / norms[j];
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    if (best < 0 || best_score <= 1e-14 * r.norm()) break;
    const Vec a = dict.column(best);
    Vec u = a;
    Vec coef = Vec::Zero(k);
    for (int pass = 0; pass < 2 && k > 0; ++pass) {
      const Vec c = Q.leftCols(k).transpose() * u;
      u -= Q.leftCols(k) * c;
      coef += c;
    }
    const double un = u.norm();
    blocked[best] = 1;
    if (un <= 1e-10 * a.norm()) continue;  // numerically inside the current span
    if (k == Q.cols()) {
      const Eigen::Index cap = std::max<Eigen::Index>(8, 2 * k);
      Q.conservativeResize(Eigen::NoChange, cap);
      R.conservativeResize(cap, cap);
      qtb.conservativeResize(cap);
    }
    Q.col(k) = u / un;
    R.row(k).head(k + 1).setZero();
    R.col(k).head(k) = coef;
    R(k, k) = un;
    qtb[k] = Q.col(k).dot(b);
    r -= Q.col(k) * Q.col(k).dot(r);
    ++k;
    res.support.push_back(best);
    res.relative_residual = r.norm() / bnorm;
    res.residual_history.push_back(res.relative_residual);
  }
  if (!res.support.empty())
    res.coefficients = R.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(qtb.head(k));
  else
    res.coefficients.resize(0);
  if (!res.converged && !capped)
    warn("omp stopped at relative residual " + std::to_string(res.relative_residual) +
         " above tolerance " + std::to_string(eps) + " with " + std::to_string(res.support.size()) +
         " terms");
  return res;
}

Vec SparseTensorRep::eval(const Vec& mu) const {
  Vec z = Vec::Zero(modes.cols());
  if (!terms.empty()) {
    std::vector<int> polys(terms.size());
    for (std::size_t t = 0; t < terms.size(); ++t) polys[t] = terms[t].poly;
    const Vec pv = basis.eval(mu, polys);
    for (std::size_t t = 0; t < terms.size(); ++t) z[terms[t].mode] += terms[t].c * pv[t];
  }
  return modes * z;
}

double SparseTensorRep::eval_point(int x, const Vec& mu) const {
  double v = 0.0;
  if (terms.empty()) return v;
  std::vector<int> polys(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) polys[t] = terms[t].poly;
  const Vec pv = basis.eval(mu, polys);
  for (std::size_t t = 0; t < terms.size(); ++t) v += terms[t].c * pv[t] * modes(x, terms[t].mode);
  return v;
}

SampleDesign random_design(int n_x, int n_points, int n_t, int n_samples, Rng& rng) {
  SampleDesign d;
  d.points = sample_without_replacement(n_x, std::min(n_points, n_x), rng);
  d.samples = sample_without_replacement(n_t, std::min(n_samples, n_t), rng);
  std::sort(d.points.begin(), d.points.end());
  std::sort(d.samples.begin(), d.samples.end());
  return d;
}

SparseTensorRep staomp_with_modes(const Mat& snapshots, const Mat& modes, const Mat& params,
                                  const PolynomialBasis& basis, const SampleDesign& design,
                                  double eps, int max_terms) {
  const int nx = static_cast<int>(design.points.size());
  const int nmu = static_cast<int>(design.samples.size());
  Mat G(nx, modes.cols());
  for (int i = 0; i < nx; ++i) G.row(i) = modes.row(design.points[i]);
  Mat mus(nmu, params.cols());
  Vec b(static_cast<Eigen::Index>(nx) * nmu);
  for (int m = 0; m < nmu; ++m) {
    mus.row(m) = params.row(design.samples[m]);
    for (int i = 0; i < nx; ++i) b[m * nx + i] = snapshots(design.points[i], design.samples[m]);
  }
  const TensorDictionary dict(G, basis.eval_many(mus));
  const OmpResult o = omp(dict, b, eps, max_terms);
  SparseTensorRep rep;
  rep.modes = modes;
  rep.basis = basis;
  rep.residual = o.relative_residual;
  const int N = static_cast<int>(modes.cols());
  for (std::size_t t = 0; t < o.support.size(); ++t)
    rep.terms.push_back({o.support[t] / N, o.support[t] % N, o.coefficients[t]});
  return rep;
}

SparseTensorRep staomp(const Mat& snapshots, const Vec& weights, const Mat& params, int n_modes,
                       const PolynomialBasis& basis, const SampleDesign& design, double eps,
                       int max_terms) {
  if (params.rows() != snapshots.cols()) throw ConfigError("staomp: one parameter row per snapshot");
  const PodModes pm = pod_modes(snapshots, weights, n_modes);
  return staomp_with_modes(snapshots, pm.modes, params, basis, design, eps, max_terms);
}

}  // namespace rmgms
