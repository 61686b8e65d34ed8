#include "rmgms/fields.hpp"

#include "rmgms/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace rmgms {

RasterField load_raster(const std::string& path, bool require_positive) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open raster file '" + path + "'");
  RasterField f;
  if (!(in >> f.ny >> f.nx) || f.nx <= 0 || f.ny <= 0)
    throw FormatError("raster '" + path + "': malformed header, expected 'ny nx'");
  f.values.resize(static_cast<Eigen::Index>(f.nx) * f.ny);
  for (Eigen::Index k = 0; k < f.values.size(); ++k) {
    if (!(in >> f.values[k]))
      throw FormatError("raster '" + path + "': expected " + std::to_string(f.values.size()) +
                        " values, read " + std::to_string(k));
    if (require_positive && !(f.values[k] > 0.0))
      throw FormatError("raster '" + path + "': nonpositive value at entry " + std::to_string(k));
  }
  std::string extra;
  if (in >> extra) throw FormatError("raster '" + path + "': trailing data");
  return f;
}

void write_raster(const std::string& path, int nx, int ny, const Vec& values) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write raster file '" + path + "'");
  out << ny << ' ' << nx << '\n' << std::setprecision(17);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) out << (i ? " " : "") << values[j * nx + i];
    out << '\n';
  }
}

void write_raster(const std::string& path, const RasterField& f) {
  write_raster(path, f.nx, f.ny, f.values);
}

RasterField generate_channel_field(int nx, int ny, double contrast, std::uint64_t seed) {
  if (contrast < 1.0) throw ConfigError("channel field contrast must be >= 1");
  RasterField f{nx, ny, Vec::Ones(static_cast<Eigen::Index>(nx) * ny)};
  Rng rng(seed, 0x6b61707061ULL);
  const int n_channels = 3 + static_cast<int>(rng.index(3));
  struct Channel {
    double y0, amp, freq, phase, width;
  };
  std::vector<Channel> ch;
  for (int c = 0; c < n_channels; ++c)
    ch.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.03, 0.12), rng.uniform(0.5, 2.0),
                  rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.03, 0.06)});
  const int n_incl = 6 + static_cast<int>(rng.index(6));
  struct Box {
    double x0, y0, wx, wy;
  };
  std::vector<Box> boxes;
  for (int b = 0; b < n_incl; ++b)
    boxes.push_back({rng.uniform(0.0, 0.95), rng.uniform(0.0, 0.95), rng.uniform(0.03, 0.08),
                     rng.uniform(0.03, 0.08)});
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double x = (i + 0.5) / nx, y = (j + 0.5) / ny;
      bool hit = false;
      for (const auto& c : ch) {
        const double yc = c.y0 + c.amp * std::sin(2.0 * std::numbers::pi * c.freq * x + c.phase);
        hit = hit || std::abs(y - yc) < 0.5 * std::max(c.width, 1.0 / ny);
      }
      for (const auto& b : boxes)
        hit = hit || (x >= b.x0 && x < b.x0 + std::max(b.wx, 1.0 / nx) && y >= b.y0 &&
                      y < b.y0 + std::max(b.wy, 1.0 / ny));
      if (hit) f.values[j * nx + i] = contrast;
    }
  return f;
}

Vec KLEField::eval(const Vec& mu) const {
  if (mu.size() != terms()) throw ConfigError("KLE parameter dimension mismatch");
  Vec a = Vec::Constant(modes.rows(), mean);
  for (int i = 0; i < terms(); ++i) a += std::sqrt(eigenvalues[i]) * mu[i] * modes.col(i);
  return a;
}

namespace {

void covariance_1d(int n, double h, double l, Vec& lambda, Mat& vecs) {
  Mat C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double d = (i - j) * h;
      C(i, j) = std::exp(-d * d / (2.0 * l * l)) * h;
    }
  Eigen::SelfAdjointEigenSolver<Mat> es(C);
  lambda = es.eigenvalues().cwiseMax(0.0);
  vecs = es.eigenvectors();
}

}  // namespace

KLEField kle_build(const GridHierarchy& g, double sigma2, double lx, double ly, int N, double mean,
                   ParamLaw law) {
  const int nx = g.nx(), ny = g.ny();
  if (N < 0 || N > nx * ny) throw ConfigError("KLE truncation N exceeds the number of cells");
  if (!(lx > 0.0) || !(ly > 0.0)) throw ConfigError("KLE correlation lengths must be positive");
  Vec lxv, lyv;
  Mat vx, vy;
  covariance_1d(nx, g.hx(), lx, lxv, vx);
  covariance_1d(ny, g.hy(), ly, lyv, vy);
  struct Pair {
    double value;
    int a, b;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(nx) * ny);
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < ny; ++b) pairs.push_back({lxv[a] * lyv[b], a, b});
  // Descending value; ties by index so that the ordering is reproducible.
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& p, const Pair& q) {
    if (p.value != q.value) return p.value > q.value;
    if (p.a + p.b != q.a + q.b) return p.a + p.b < q.a + q.b;
    return p.a < q.a;
  });
  KLEField k;
  k.mean = mean;
  k.sigma2 = sigma2;
  k.lx = lx;
  k.ly = ly;
  k.law = law;
  k.eigenvalues.resize(N);
  k.modes.resize(static_cast<Eigen::Index>(nx) * ny, N);
  const double scale = 1.0 / std::sqrt(g.cell_area());
  for (int t = 0; t < N; ++t) {
    const auto& p = pairs[t];
    k.eigenvalues[t] = sigma2 * p.value;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) k.modes(j * nx + i, t) = vx(i, p.a) * vy(j, p.b) * scale;
  }
  return k;
}

std::string to_string(ModelTag t) {
  switch (t) {
    case ModelTag::Example1: return "example1";
    case ModelTag::Example2: return "example2";
    case ModelTag::TwoPhase: return "twophase";
    case ModelTag::Custom: return "custom";
  }
  return "custom";
}

namespace {

void check_raster(const GridHierarchy& g, const RasterField& r) {
  if (r.nx != g.nx() || r.ny != g.ny())
    throw ConfigError("raster " + std::to_string(r.ny) + "x" + std::to_string(r.nx) +
                      " does not match the fine grid");
}

}  // namespace

ParametricCoefficient ParametricCoefficient::example1(const GridHierarchy& g, const RasterField& kappa1) {
  check_raster(g, kappa1);
  const int n = g.num_cells();
  Vec xy(n);
  for (int c = 0; c < n; ++c) {
    const auto m = g.cell_center(c);
    xy[c] = m[0] * m[1];
  }
  ParametricCoefficient pc;
  pc.tag_ = ModelTag::Example1;
  pc.p_ = 1;
  pc.law_ = ParamLaw::Uniform;
  pc.k_ = [xy, kap = kappa1.values](const Vec& mu) {
    const double m = mu[0];
    Vec k(xy.size());
    for (Eigen::Index c = 0; c < k.size(); ++c)
      k[c] = 10000.0 / (10.0 * std::sin(20.0 * m + xy[c]) + (std::cos(m) + 1.2) * kap[c] + 25.0);
    return k;
  };
  return pc;
}

ParametricCoefficient ParametricCoefficient::example2(const GridHierarchy& g, const RasterField& kappa1,
                                                      KLEField a) {
  check_raster(g, kappa1);
  ParametricCoefficient pc;
  pc.tag_ = ModelTag::Example2;
  pc.p_ = a.terms();
  pc.law_ = a.law;
  const Vec khc = 1e4 * kappa1.values.cwiseInverse();
  pc.k_ = [khc, a = std::move(a)](const Vec& mu) -> Vec { return a.eval(mu).cwiseProduct(khc); };
  return pc;
}

ParametricCoefficient ParametricCoefficient::twophase(const GridHierarchy& g, const RasterField& kappa2,
                                                      KLEField a) {
  check_raster(g, kappa2);
  ParametricCoefficient pc;
  pc.tag_ = ModelTag::TwoPhase;
  pc.p_ = a.terms();
  pc.law_ = a.law;
  pc.k_ = [k2 = kappa2.values, a = std::move(a)](const Vec& mu) -> Vec {
    return (k2 + a.eval(mu)).array().exp().matrix();
  };
  return pc;
}

ParametricCoefficient ParametricCoefficient::custom(int p, ParamLaw law, KFunction k) {
  ParametricCoefficient pc;
  pc.tag_ = ModelTag::Custom;
  pc.p_ = p;
  pc.law_ = law;
  pc.k_ = std::move(k);
  return pc;
}

Vec ParametricCoefficient::eval_k(const Vec& mu) const {
  if (mu.size() != p_) throw ConfigError("parameter dimension mismatch: expected " + std::to_string(p_));
  Vec k = k_(mu);
  for (Eigen::Index c = 0; c < k.size(); ++c)
    if (!(k[c] > 0.0) || !std::isfinite(k[c])) {
      std::ostringstream os;
      os << to_string(tag_) << " coefficient is nonpositive (" << k[c] << ") at cell " << c;
      throw ModelError(os.str());
    }
  return k;
}

Vec ParametricCoefficient::eval_kinv(const Vec& mu) const { return eval_k(mu).cwiseInverse(); }

Mat ParametricCoefficient::sample(int n, Rng& rng) const {
  Mat s(n, p_);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p_; ++j) s(i, j) = law_ == ParamLaw::Uniform ? rng.uniform(-1.0, 1.0) : rng.normal();
  return s;
}

Vec AffineDecomposition::coefficients(const Vec& mu) const {
  Vec th = Vec::Zero(size());
  if (terms_.empty()) return th;
  const Vec p = basis_.eval(mu);
  for (int q = 0; q < size(); ++q)
    for (auto [i, c] : terms_[q].poly) th[q] += c * p[i];
  return th;
}

Vec AffineDecomposition::kinv_from(const Vec& theta) const {
  Vec k = Vec::Zero(cells());
  for (int q = 0; q < size(); ++q) k += theta[q] * terms_[q].field;
  return k;
}

Vec AffineDecomposition::kinv(const Vec& mu) const { return kinv_from(coefficients(mu)); }

AffineDecomposition AffineDecomposition::constant(const Vec& kinv, int p) {
  return AffineDecomposition(PolynomialBasis(PolyFamily::Legendre, p, 0), {AffineTerm{kinv, {{0, 1.0}}}}, 0.0);
}

double affine_max_relative_error(const AffineDecomposition& ad, const ParametricCoefficient& c,
                                 const Mat& samples) {
  double e = 0.0;
  for (int j = 0; j < samples.rows(); ++j) {
    const Vec mu = samples.row(j).transpose();
    const Vec exact = c.eval_kinv(mu);
    e = std::max(e, ((ad.kinv(mu) - exact).array().abs() / exact.array().abs()).maxCoeff());
  }
  return e;
}

namespace {

double max_rel(const Mat& approx, const Mat& exact) {
  return ((approx - exact).array().abs() / exact.array().abs()).maxCoeff();
}

}  // namespace

AffineDecomposition affine_decompose(const ParametricCoefficient& c, const Mat& trainset,
                                     const AffineOptions& opt) {
  const int nt = static_cast<int>(trainset.rows());
  if (nt == 0) throw ConfigError("affine decomposition needs a nonempty training set");
  const Vec k0 = c.eval_kinv(trainset.row(0).transpose());
  const int n = static_cast<int>(k0.size());
  Mat K(n, nt);
  K.col(0) = k0;
  for (int j = 1; j < nt; ++j) K.col(j) = c.eval_kinv(trainset.row(j).transpose());

  Eigen::BDCSVD<Mat> svd(K, Eigen::ComputeThinU);
  const Vec& s = svd.singularValues();
  int rank = 0;
  while (rank < s.size() && s[rank] > 1e-14 * s[0]) ++rank;
  const int mmax = std::max(1, std::min(opt.max_terms, rank));
  const Mat U = svd.matrixU().leftCols(mmax);

  // Smallest spatial rank whose exact projection leaves half the budget.
  int m = mmax;
  double proj_err = 0.0;
  {
    Mat R = K;
    for (int q = 0; q < mmax; ++q) {
      R -= U.col(q) * (U.col(q).transpose() * K);
      proj_err = (R.array().abs() / K.array().abs()).maxCoeff();
      if (proj_err <= 0.5 * opt.tol) {
        m = q + 1;
        break;
      }
    }
  }
  const Mat Um = U.leftCols(m);
  const Mat C = Um.transpose() * K;  // m x nt
  const PolynomialBasis basis(opt.family, c.dim(), opt.degree);
  const DenseDictionary dict(basis.eval_many(trainset));

  double eps = 0.25 * opt.tol, best = 1e300;
  std::vector<AffineTerm> best_terms;
  for (int attempt = 0; attempt < 10; ++attempt, eps /= 4.0) {
    std::vector<AffineTerm> terms;
    Mat Chat = Mat::Zero(m, nt);
    for (int q = 0; q < m; ++q) {
      const Vec row = C.row(q).transpose();
      const OmpResult o = omp(dict, row, eps, nt);
      AffineTerm t;
      double amax = 0.0, lead = 1.0;
      for (std::size_t i = 0; i < o.support.size(); ++i)
        if (std::abs(o.coefficients[i]) > amax) {
          amax = std::abs(o.coefficients[i]);
          lead = o.coefficients[i];
        }
      for (std::size_t i = 0; i < o.support.size(); ++i) {
        t.poly.emplace_back(o.support[i], o.coefficients[i] / lead);
        Chat.row(q) += o.coefficients[i] * dict.column(o.support[i]).transpose();
      }
      if (o.support.empty()) continue;
      t.field = lead * Um.col(q);
      terms.push_back(std::move(t));
    }
    const double err = max_rel(Um * Chat, K);
    if (err < best) {
      best = err;
      best_terms = terms;
    }
    if (err <= opt.tol) break;
  }
  if (best > opt.tol) {
    std::ostringstream os;
    os << "affine decomposition reached " << best << " > tol " << opt.tol << " with " << m
       << " spatial modes (exact projection error " << proj_err << ")";
    throw AffineError(os.str(), best);
  }
  return AffineDecomposition(basis, std::move(best_terms), best);
}

}  // namespace rmgms
