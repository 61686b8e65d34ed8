#include "rmgms/experiments.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace rmgms {

namespace {

// Stream ids of the seeded draws.
enum Stream : std::uint64_t {
  kTrain = 1,
  kValidate = 2,
  kTest = 3,
  kRandomSelect = 4,
  kSeparation = 5,
  kDesign = 6,
  kEnsemble = 7,
  kEval = 8,
  kAffine = 9,
};

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

template <class T>
std::vector<T> split_list(const std::string& s, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw ConfigError("config key '" + key + "': bad list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Reads key into field when present; unknown keys are rejected separately.
struct Reader {
  const pt::ptree& tree;
  std::set<std::string> seen;
  template <class T>
  void get(const std::string& key, T& field) {
    seen.insert(key);
    const auto v = tree.get_optional<std::string>(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, std::string>) {
      field = *v;
    } else {
      std::istringstream is(*v);
      T x{};
      if (!(is >> x) || !(is >> std::ws).eof())
        throw ConfigError("config key '" + key + "': cannot parse '" + *v + "'");
      field = x;
    }
  }
  template <class T>
  void list(const std::string& key, std::vector<T>& field) {
    seen.insert(key);
    if (const auto v = tree.get_optional<std::string>(key)) field = split_list<T>(*v, key);
  }
};

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

Mat draw(const ParametricCoefficient& coef, int n, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, stream);
  return coef.sample(n, rng);
}

Vec lumped_l2_weights(const FineSpaces& s) { return s.mass_l2().diagonal(); }

double weighted_rel(const Vec& ref, const Vec& approx, const Vec& w) {
  const double d = std::sqrt(w.dot((ref - approx).cwiseAbs2()));
  const double n = std::sqrt(w.dot(ref.cwiseAbs2()));
  return n > 0.0 ? d / n : d;
}

PolyFamily family_of(const ExperimentConfig& c) { return poly_family_from_string(c.family); }

Manifest base_manifest(const ExperimentConfig& c, const std::string& stage) {
  Manifest m;
  m.experiment = c.experiment + "." + stage;
  m.config_hash = config_hash(c);
  m.seed = c.seed;
  return m;
}

TwoPhaseConfig twophase_config(const ExperimentConfig& c, std::vector<double> times) {
  TwoPhaseConfig t;
  t.viscosity_ratio = c.viscosity_ratio;
  t.cfl_safety = c.cfl_safety;
  t.pvi_per_unit = c.pvi_per_unit;
  t.record_times = std::move(times);
  return t;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  Reader r{tree, {}};
  r.get("experiment.name", c.experiment);
  r.get("experiment.seed", c.seed);
  r.get("experiment.out", c.out);
  r.get("grid.nx", c.nx);
  r.get("grid.ny", c.ny);
  r.get("grid.ncx", c.ncx);
  r.get("grid.ncy", c.ncy);
  r.get("field.raster", c.raster);
  r.get("field.contrast", c.contrast);
  r.get("field.seed", c.field_seed);
  r.get("field.kle_terms", c.kle_terms);
  r.get("field.kle_sigma2", c.kle_sigma2);
  r.get("field.kle_corr", c.kle_corr);
  r.get("field.kle_mean", c.kle_mean);
  r.get("offline.n_train", c.n_train);
  r.get("offline.n_op", c.n_op);
  r.get("offline.n_validate", c.n_validate);
  r.get("offline.snapshot_basis", c.snapshot_basis);
  r.get("offline.max_basis", c.max_basis);
  r.get("offline.selection", c.selection);
  r.get("offline.basis", c.basis);
  r.get("offline.eps_star", c.eps_star);
  r.get("offline.affine_tol", c.affine_tol);
  r.get("offline.affine_degree", c.affine_degree);
  r.get("offline.affine_terms", c.affine_terms);
  r.get("offline.n_affine", c.n_affine);
  r.get("online.n_test", c.n_test);
  r.get("online.solver_tol", c.solver_tol);
  r.get("separation.n_t", c.n_t);
  r.get("separation.family", c.family);
  r.get("separation.degree", c.degree);
  r.list("separation.lsmos_modes", c.lsmos_modes);
  r.get("separation.staomp_modes", c.staomp_modes);
  r.get("separation.staomp_samples", c.staomp_samples);
  r.get("separation.staomp_points", c.staomp_points);
  r.get("separation.eps_on", c.eps_on);
  r.get("twophase.ensemble", c.ensemble);
  r.get("twophase.n_eval", c.n_eval);
  r.list("twophase.record_times", c.record_times);
  r.get("twophase.watercut_step", c.watercut_step);
  r.get("twophase.pvi_per_unit", c.pvi_per_unit);
  r.get("twophase.viscosity_ratio", c.viscosity_ratio);
  r.get("twophase.cfl_safety", c.cfl_safety);
  r.get("twophase.log_contrast_base", c.log_contrast_base);
  r.get("twophase.sat_modes", c.sat_modes);
  r.get("twophase.wc_modes", c.wc_modes);
  r.get("twophase.sat_points", c.sat_points);
  r.get("twophase.wc_points", c.wc_points);
  r.get("twophase.sat_eps", c.sat_eps);
  r.get("twophase.sat_degree", c.sat_degree);
  r.get("twophase.n_fine_reference", c.n_fine_reference);
  for (const auto& [sec, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + sec + "' outside a section");
    for (const auto& [key, val] : body) {
      (void)val;
      if (!r.seen.count(sec + "." + key)) throw ConfigError("unknown config key '" + sec + "." + key + "'");
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "[experiment]\nname = " << c.experiment << "\nseed = " << c.seed << "\nout = " << c.out << "\n\n";
  os << "[grid]\nnx = " << c.nx << "\nny = " << c.ny << "\nncx = " << c.ncx << "\nncy = " << c.ncy << "\n\n";
  os << "[field]\n";
  if (!c.raster.empty()) os << "raster = " << c.raster << "\n";
  os << "contrast = " << c.contrast << "\nseed = " << c.field_seed << "\nkle_terms = " << c.kle_terms
     << "\nkle_sigma2 = " << c.kle_sigma2 << "\nkle_corr = " << c.kle_corr << "\nkle_mean = " << c.kle_mean
     << "\n\n";
  os << "[offline]\nn_train = " << c.n_train << "\nn_op = " << c.n_op << "\nn_validate = " << c.n_validate
     << "\nsnapshot_basis = " << c.snapshot_basis << "\nmax_basis = " << c.max_basis
     << "\nselection = " << c.selection << "\nbasis = " << c.basis << "\neps_star = " << c.eps_star
     << "\naffine_tol = " << c.affine_tol << "\naffine_degree = " << c.affine_degree
     << "\naffine_terms = " << c.affine_terms << "\nn_affine = " << c.n_affine << "\n\n";
  os << "[online]\nn_test = " << c.n_test << "\nsolver_tol = " << c.solver_tol << "\n\n";
  os << "[separation]\nn_t = " << c.n_t << "\nfamily = " << c.family << "\ndegree = " << c.degree
     << "\nlsmos_modes = " << join(c.lsmos_modes) << "\nstaomp_modes = " << c.staomp_modes
     << "\nstaomp_samples = " << c.staomp_samples << "\nstaomp_points = " << c.staomp_points
     << "\neps_on = " << c.eps_on << "\n\n";
  os << "[twophase]\nensemble = " << c.ensemble << "\nn_eval = " << c.n_eval
     << "\nrecord_times = " << join(c.record_times) << "\nwatercut_step = " << c.watercut_step
     << "\npvi_per_unit = " << c.pvi_per_unit << "\nviscosity_ratio = " << c.viscosity_ratio
     << "\ncfl_safety = " << c.cfl_safety << "\nlog_contrast_base = " << c.log_contrast_base
     << "\nsat_modes = " << c.sat_modes << "\nwc_modes = " << c.wc_modes << "\nsat_points = " << c.sat_points
     << "\nwc_points = " << c.wc_points << "\nsat_eps = " << c.sat_eps << "\nsat_degree = " << c.sat_degree
     << "\nn_fine_reference = " << c.n_fine_reference << "\n";
  return os.str();
}

void validate(const ExperimentConfig& c) {
  static const std::set<std::string> tags{"example1", "example2", "twophase", "custom"};
  check(tags.count(c.experiment) > 0, "unknown experiment '" + c.experiment + "'");
  check(c.nx > 0 && c.ny > 0 && c.ncx > 0 && c.ncy > 0, "grid sizes must be positive");
  check(c.nx % c.ncx == 0 && c.ny % c.ncy == 0,
        "fine grid " + std::to_string(c.nx) + "x" + std::to_string(c.ny) + " is not divisible by coarse grid " +
            std::to_string(c.ncx) + "x" + std::to_string(c.ncy));
  check(c.n_train > 0 && c.n_op > 0 && c.n_validate > 0 && c.n_test > 0 && c.n_t > 0, "sample counts must be positive");
  check(c.n_op <= c.n_train, "n_op exceeds n_train");
  check(c.n_affine >= 0, "n_affine must be nonnegative");
  check(c.snapshot_basis > 0 && c.max_basis > 0, "basis counts must be positive");
  check(c.snapshot_basis <= std::min(c.nx / c.ncx, c.ny / c.ncy),
        "snapshot_basis exceeds the fine edges per coarse edge");
  check(c.selection == "greedy" || c.selection == "random", "selection must be greedy or random");
  basis_kind_from_string(c.basis);
  check(c.family == "legendre" || c.family == "hermite", "family must be legendre or hermite");
  check(c.degree >= 0 && c.affine_degree >= 0 && c.sat_degree >= 0, "degrees must be nonnegative");
  check(c.affine_tol > 0.0 && c.eps_on > 0.0 && c.sat_eps > 0.0 && c.solver_tol > 0.0, "tolerances must be positive");
  check(c.kle_terms > 0 && c.kle_sigma2 >= 0.0 && c.kle_corr > 0.0, "bad KLE settings");
  check(c.contrast >= 1.0 && c.log_contrast_base >= 1.0, "contrast must be >= 1");
  check(c.staomp_modes > 0 && c.staomp_samples > 0 && c.staomp_points > 0, "STAOMP counts must be positive");
  for (int m : c.lsmos_modes) check(m > 0, "lsmos_modes must be positive");
  check(c.ensemble >= 2 && c.n_eval > 0, "ensemble needs at least two members");
  check(c.watercut_step > 0.0 && c.pvi_per_unit > 0.0, "time settings must be positive");
  check(!c.record_times.empty(), "record_times is empty");
  for (std::size_t i = 0; i < c.record_times.size(); ++i)
    check(c.record_times[i] > 0.0 && (i == 0 || c.record_times[i] > c.record_times[i - 1]),
          "record_times must be positive and increasing");
  check(c.sat_modes > 0 && c.wc_modes > 0 && c.sat_points > 0 && c.wc_points > 0, "surrogate counts must be positive");
  check(c.n_fine_reference >= 0 && c.n_fine_reference <= c.n_eval, "n_fine_reference must lie in [0, n_eval]");
}

std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig k = c;
  k.out.clear();
  return hex64(fnv1a(dump_config(k)));
}

ExperimentConfig paper_scale(ExperimentConfig c) {
  if (c.experiment == "example1" || c.experiment == "custom") {
    c.nx = c.ny = 80;
    c.ncx = c.ncy = 8;
    c.n_train = 200;
    c.n_op = 10;
    c.snapshot_basis = 5;
    c.n_test = 1000;
  } else if (c.experiment == "example2") {
    c.nx = c.ny = 60;
    c.ncx = c.ncy = 10;
    c.n_train = 500;
    c.n_op = 40;
    c.snapshot_basis = 5;
    c.max_basis = 7;
    c.n_t = 2000;
    c.staomp_samples = 70;
    c.n_test = 1000;
  } else if (c.experiment == "twophase") {
    c.nx = c.ny = 56;
    c.ncx = c.ncy = 7;
    c.n_train = 200;
    c.n_op = 40;
    c.snapshot_basis = 7;
    c.max_basis = 4;
    c.ensemble = 600;
    c.n_eval = 1000;
  }
  validate(c);
  return c;
}

Problem make_problem(const ExperimentConfig& c) {
  validate(c);
  Problem p;
  p.grid = std::make_unique<GridHierarchy>(c.nx, c.ny, c.ncx, c.ncy);
  p.spaces = std::make_unique<FineSpaces>(*p.grid);
  const GridHierarchy& g = *p.grid;
  const double contrast = c.experiment == "twophase" ? c.log_contrast_base : c.contrast;
  p.field = c.raster.empty() ? generate_channel_field(c.nx, c.ny, contrast, c.field_seed) : load_raster(c.raster);
  if (p.field.nx != c.nx || p.field.ny != c.ny) throw ConfigError("raster does not match the fine grid");
  if (c.experiment == "example1") {
    p.coef = ParametricCoefficient::example1(g, p.field);
    p.spaces->set_source([](double x, double y) { return (y - 0.5) * std::cos(std::numbers::pi * (x - 0.5)); });
  } else if (c.experiment == "example2") {
    p.coef = ParametricCoefficient::example2(
        g, p.field, kle_build(g, c.kle_sigma2, c.kle_corr, c.kle_corr, c.kle_terms, c.kle_mean));
    p.spaces->set_source([](double x, double y) { return (x + 1.0) * std::cos(std::numbers::pi * y); });
  } else if (c.experiment == "twophase") {
    RasterField k2 = p.field;
    k2.values = p.field.values.array().log().matrix();
    p.coef = ParametricCoefficient::twophase(
        g, k2, kle_build(g, c.kle_sigma2, c.kle_corr, c.kle_corr, c.kle_terms, c.kle_mean, ParamLaw::Normal));
    p.q = two_spot_source(g);
    p.spaces->set_source_integrals(p.spaces->areas().cwiseProduct(p.q));
  } else {
    // Parameter-independent coefficient on one uniform parameter.
    const Vec k = p.field.values;
    p.coef = ParametricCoefficient::custom(1, ParamLaw::Uniform, [k](const Vec&) -> Vec { return k; });
    p.spaces->set_source([](double x, double y) { return (y - 0.5) * std::cos(std::numbers::pi * (x - 0.5)); });
  }
  return p;
}

Offline run_offline(const ExperimentConfig& c, const Problem& p, Selection sel) {
  Offline off;
  const ParametricCoefficient& coef = *p.coef;
  off.train = draw(coef, c.n_train, c.seed, kTrain);
  double t0 = wall_seconds();
  AffineOptions ao;
  ao.tol = c.affine_tol;
  ao.degree = c.affine_degree;
  ao.max_terms = c.affine_terms;
  ao.family = coef.law() == ParamLaw::Normal ? PolyFamily::Hermite : PolyFamily::Legendre;
  // A fit on the training set alone oscillates between samples once the
  // polynomial space is about as large as the set.
  const int n_affine =
      c.n_affine > 0 ? c.n_affine : std::max(c.n_train, 10 * PolynomialBasis(ao.family, coef.dim(), ao.degree).size());
  off.ad = affine_decompose(coef, draw(coef, n_affine, c.seed, kAffine), ao);
  off.t_affine = wall_seconds() - t0;
  off.ctx = std::make_unique<ReducedContext>(*p.spaces, off.ad, c.snapshot_basis);
  off.sc = stability_constants(*p.spaces);

  t0 = wall_seconds();
  if (sel == Selection::Greedy) {
    GreedyOptions go;
    go.n_p = c.snapshot_basis;
    go.max_size = c.n_op;
    const auto gr = greedy_select(*off.ctx, off.train, go, off.sc);
    off.selected = gr.selected;
    off.greedy_eps = gr.eps;
  } else {
    Rng rng(c.seed, kRandomSelect);
    off.selected = sample_without_replacement(c.n_train, c.n_op, rng);
  }
  off.t_select = wall_seconds() - t0;

  t0 = wall_seconds();
  std::vector<Vec> mus;
  for (int i : off.selected) mus.push_back(off.train.row(i).transpose());
  off.lib = build_library(*off.ctx, mus);
  off.t_library = wall_seconds() - t0;

  const Mat vmus = draw(coef, c.n_validate, c.seed, kValidate);
  for (int i = 0; i < vmus.rows(); ++i) {
    const Vec mu = vmus.row(i).transpose();
    FineSolution f = solve_fine_kinv(*p.spaces, coef.eval_kinv(mu));
    f.mu = mu;
    off.validation.push_back(std::move(f));
  }
  t0 = wall_seconds();
  BocvOptions bo;
  bo.eps_star = c.eps_star;
  bo.max_groups = c.max_basis;
  off.bocv = bocv_build(*off.ctx, off.lib, off.validation, bo);
  off.t_bocv = wall_seconds() - t0;
  return off;
}

ReducedSpace bocv_prefix(const Offline& off, int n) {
  const int ne = off.ctx->spaces().num_edges();
  n = std::min<int>(n, static_cast<int>(off.bocv.groups.size()));
  std::vector<Triplet> t;
  int col = 0;
  for (int k = 0; k < n; ++k) {
    const SpMat G = off.lib.group(off.bocv.groups[k], ne);
    for (int j = 0; j < G.outerSize(); ++j, ++col)
      for (SpMat::InnerIterator it(G, j); it; ++it) t.emplace_back(static_cast<int>(it.row()), col, it.value());
  }
  SpMat X(ne, col);
  X.setFromTriplets(t.begin(), t.end());
  return make_reduced_space(*off.ctx, X, BasisKind::BOCV);
}

ReducedSpace pod_space(const Offline& off, int n) { return pod_build(*off.ctx, off.lib, n).space; }

TestSet make_test_set(const Problem& p, int n, std::uint64_t seed) {
  TestSet ts;
  ts.mus = draw(*p.coef, n, seed, kTest);
  for (int i = 0; i < n; ++i) {
    const auto f = solve_fine_kinv(*p.spaces, p.coef->eval_kinv(ts.mus.row(i).transpose()));
    ts.ref.push_back({f.v, f.p});
  }
  return ts;
}

SampleErrors reduced_errors(const Problem& p, const ReducedSpace& rs, const AffineDecomposition& ad,
                            const TestSet& ts, double tol) {
  const int n = static_cast<int>(ts.ref.size());
  SampleErrors e{Vec(n), Vec(n)};
  for (int i = 0; i < n; ++i) {
    const auto sol = reduced_solve(rs, ad, ts.mus.row(i).transpose(), tol);
    const auto f = reconstruct(rs, sol);
    e.v[i] = l2_norm(*p.spaces, ts.ref[i].v - f.v) / l2_norm(*p.spaces, ts.ref[i].v);
    e.p[i] = pressure_l2_norm(*p.spaces, ts.ref[i].p - f.p) / pressure_l2_norm(*p.spaces, ts.ref[i].p);
  }
  return e;
}

StageResult run_fine_solve(const ExperimentConfig& c) {
  const Problem p = make_problem(c);
  StageResult r;
  r.manifest = base_manifest(c, "fine-solve");
  const Mat mus = draw(*p.coef, 1, c.seed, kTest);
  const Vec mu = mus.row(0).transpose();
  const double t0 = wall_seconds();
  const auto f = solve_fine_kinv(*p.spaces, p.coef->eval_kinv(mu), c.solver_tol);
  r.manifest.timings["fine_solve"] = wall_seconds() - t0;
  CsvTable t({"quantity", "value"});
  t.add({"edges", fmt(p.spaces->num_edges())});
  t.add({"cells", fmt(p.spaces->num_cells())});
  t.add({"velocity_l2", fmt(l2_norm(*p.spaces, f.v))});
  t.add({"pressure_l2", fmt(pressure_l2_norm(*p.spaces, f.p))});
  t.add({"conservation_residual", fmt(local_conservation_residual(*p.spaces, f.v))});
  r.tables["fine_solve"] = t;
  fs::create_directories(c.out);
  write_raster((fs::path(c.out) / "fine_pressure.txt").string(), c.nx, c.ny, f.p);
  write_raster((fs::path(c.out) / "coefficient.txt").string(), c.nx, c.ny, p.coef->eval_k(mu));
  ArtifactBundle b;
  b.arrays["v"] = f.v;
  b.arrays["p"] = f.p;
  b.arrays["mu"] = mu;
  write_bundle((fs::path(c.out) / "fine_solution.bin").string(), b);
  r.manifest.artifacts["fine_solution"] = "fine_solution.bin";
  r.manifest.artifacts["fine_pressure"] = "fine_pressure.txt";
  r.manifest.artifacts["coefficient"] = "coefficient.txt";
  return r;
}

namespace {

ArtifactBundle space_bundle(const ReducedSpace& rs) {
  ArtifactBundle b;
  Mat trip(3, rs.X.nonZeros());
  int k = 0;
  for (int j = 0; j < rs.X.outerSize(); ++j)
    for (SpMat::InnerIterator it(rs.X, j); it; ++it, ++k) trip.col(k) << static_cast<double>(it.row()), j, it.value();
  b.arrays["X_triplets"] = trip;
  b.arrays["T"] = rs.T;
  b.arrays["BN"] = rs.BN;
  b.arrays["FN"] = rs.FN;
  b.meta = {{"kind", to_string(rs.kind)}, {"size", rs.size()}, {"rows", rs.X.rows()}, {"cols", rs.X.cols()}};
  return b;
}

CsvTable offline_table(const Offline& off) {
  CsvTable t({"round", "selected_row", "greedy_eps", "bocv_group", "bocv_mean_error"});
  const std::size_t n = std::max(off.selected.size(), off.bocv.groups.size());
  for (std::size_t i = 0; i < n; ++i)
    t.add({fmt(static_cast<int>(i + 1)), i < off.selected.size() ? fmt(off.selected[i]) : "",
           i < off.greedy_eps.size() ? fmt(off.greedy_eps[i]) : "",
           i < off.bocv.groups.size() ? fmt(off.bocv.groups[i]) : "",
           i < off.bocv.mean_error.size() ? fmt(off.bocv.mean_error[i]) : ""});
  return t;
}

void offline_timings(Manifest& m, const Offline& off, const std::string& prefix) {
  m.timings[prefix + "affine"] = off.t_affine;
  m.timings[prefix + "select"] = off.t_select;
  m.timings[prefix + "library"] = off.t_library;
  m.timings[prefix + "bocv"] = off.t_bocv;
}

Selection selection_of(const ExperimentConfig& c) {
  return c.selection == "greedy" ? Selection::Greedy : Selection::Random;
}

}  // namespace

StageResult run_offline_stage(const ExperimentConfig& c) {
  const Problem p = make_problem(c);
  StageResult r;
  r.manifest = base_manifest(c, "offline");
  const Offline off = run_offline(c, p, selection_of(c));
  offline_timings(r.manifest, off, "offline_");
  r.tables["offline"] = offline_table(off);
  const ReducedSpace rs = c.basis == "pod" ? pod_space(off, c.max_basis) : bocv_prefix(off, c.max_basis);
  fs::create_directories(c.out);
  write_bundle((fs::path(c.out) / "reduced_space.bin").string(), space_bundle(rs));
  r.manifest.artifacts["reduced_space"] = "reduced_space.bin";
  CsvTable s({"quantity", "value"});
  s.add({"affine_terms", fmt(off.ad.size())});
  s.add({"affine_tolerance", fmt(off.ad.achieved_tolerance())});
  s.add({"reduced_size", fmt(rs.size())});
  s.add({"c_V", fmt(off.sc.c_V)});
  s.add({"beta", fmt(off.sc.beta)});
  r.tables["offline_summary"] = s;
  return r;
}

StageResult run_online_stage(const ExperimentConfig& c) {
  const Problem p = make_problem(c);
  StageResult r;
  r.manifest = base_manifest(c, "online");
  const Offline off = run_offline(c, p, selection_of(c));
  offline_timings(r.manifest, off, "offline_");
  const TestSet ts = make_test_set(p, c.n_test, c.seed);
  CsvTable t({"basis", "n", "eps_v", "eps_p", "online_seconds_per_sample"});
  for (int n = 1; n <= c.max_basis; ++n) {
    const ReducedSpace rs = c.basis == "pod" ? pod_space(off, n) : bocv_prefix(off, n);
    const double t0 = wall_seconds();
    const auto e = reduced_errors(p, rs, off.ad, ts, c.solver_tol);
    const double dt = (wall_seconds() - t0) / c.n_test;
    t.add({c.basis, fmt(n), fmt(e.mean_v()), fmt(e.mean_p()), fmt(dt)});
    if (n == c.max_basis) r.manifest.timings["online_per_sample"] = dt;
  }
  r.tables["online"] = t;
  return r;
}

StageResult run_compare(const ExperimentConfig& c) {
  const Problem p = make_problem(c);
  StageResult r;
  r.manifest = base_manifest(c, "compare");
  const TestSet ts = make_test_set(p, c.n_test, c.seed);
  CsvTable curve({"method", "selection", "basis", "n", "eps_v", "eps_p"});
  CsvTable series({"sample", "GBOCV", "GPOD", "RBOCV", "RPOD"});
  std::map<std::string, Vec> last;
  for (Selection sel : {Selection::Greedy, Selection::Random}) {
    const std::string sn = sel == Selection::Greedy ? "greedy" : "random";
    const Offline off = run_offline(c, p, sel);
    offline_timings(r.manifest, off, sn + "_");
    for (const std::string bn : {"bocv", "pod"}) {
      const std::string method = std::string(sel == Selection::Greedy ? "G" : "R") + (bn == "bocv" ? "BOCV" : "POD");
      for (int n = 1; n <= c.max_basis; ++n) {
        const ReducedSpace rs = bn == "pod" ? pod_space(off, n) : bocv_prefix(off, n);
        const auto e = reduced_errors(p, rs, off.ad, ts, c.solver_tol);
        curve.add({method, sn, bn, fmt(n), fmt(e.mean_v()), fmt(e.mean_p())});
        if (n == c.max_basis) last[method] = e.v;
      }
    }
  }
  for (int i = 0; i < std::min(c.n_test, 100); ++i)
    series.add({fmt(i), fmt(last["GBOCV"][i]), fmt(last["GPOD"][i]), fmt(last["RBOCV"][i]), fmt(last["RPOD"][i])});
  r.tables["compare"] = curve;
  r.tables["compare_samples"] = series;
  return r;
}

StageResult run_separate(const ExperimentConfig& c) {
  const Problem p = make_problem(c);
  const FineSpaces& s = *p.spaces;
  StageResult r;
  r.manifest = base_manifest(c, "separate");
  const Offline off = run_offline(c, p, Selection::Greedy);
  offline_timings(r.manifest, off, "offline_");
  const ReducedSpace rs = bocv_prefix(off, c.max_basis);

  // Reduced-model snapshots over Xi_t.
  const Mat mus = draw(*p.coef, c.n_t, c.seed, kSeparation);
  Mat V(s.num_edges(), c.n_t), P(s.num_cells(), c.n_t);
  for (int j = 0; j < c.n_t; ++j) {
    const auto f = reconstruct(rs, reduced_solve(rs, off.ad, mus.row(j).transpose(), c.solver_tol));
    V.col(j) = f.v;
    P.col(j) = f.p;
  }
  const Vec wv = lumped_l2_weights(s), wp = s.areas();
  const PolynomialBasis basis(family_of(c), p.coef->dim(), c.degree);
  const int mmax = *std::max_element(c.lsmos_modes.begin(), c.lsmos_modes.end());
  double t0 = wall_seconds();
  const SeparatedRep lv = lsmos(V, wv, mus, basis, {-1.0, mmax});
  const SeparatedRep lp = lsmos(P, wp, mus, basis, {-1.0, mmax});
  r.manifest.timings["lsmos_build"] = wall_seconds() - t0;

  Rng drng(c.seed, kDesign);
  const int ns = std::min(c.staomp_samples, c.n_t);
  const auto dv = random_design(s.num_edges(), c.staomp_points, c.n_t, ns, drng);
  const auto dp = random_design(s.num_cells(), c.staomp_points, c.n_t, ns, drng);
  t0 = wall_seconds();
  const SparseTensorRep sv = staomp(V, wv, mus, c.staomp_modes, basis, dv, c.eps_on);
  const SparseTensorRep sp = staomp(P, wp, mus, c.staomp_modes, basis, dp, c.eps_on);
  r.manifest.timings["staomp_build"] = wall_seconds() - t0;

  const TestSet ts = make_test_set(p, c.n_test, c.seed);
  struct Row {
    std::string name;
    int mt_v = 0, mt_p = 0;
    double ev1 = 0, ev2 = 0, ep1 = 0, ep2 = 0, cpu = 0;
  };
  std::vector<Row> rows;
  Row red{"RmGMsB"};
  std::vector<FineFields> redf;
  t0 = wall_seconds();
  for (int i = 0; i < c.n_test; ++i)
    redf.push_back(reconstruct(rs, reduced_solve(rs, off.ad, ts.mus.row(i).transpose(), c.solver_tol)));
  red.cpu = (wall_seconds() - t0) / c.n_test;
  auto accumulate = [&](Row& row, const std::vector<FineFields>& a) {
    for (int i = 0; i < c.n_test; ++i) {
      row.ev1 += l2_norm(s, ts.ref[i].v - a[i].v) / l2_norm(s, ts.ref[i].v) / c.n_test;
      row.ep1 += pressure_l2_norm(s, ts.ref[i].p - a[i].p) / pressure_l2_norm(s, ts.ref[i].p) / c.n_test;
      row.ev2 += l2_norm(s, redf[i].v - a[i].v) / l2_norm(s, redf[i].v) / c.n_test;
      row.ep2 += pressure_l2_norm(s, redf[i].p - a[i].p) / pressure_l2_norm(s, redf[i].p) / c.n_test;
    }
  };
  accumulate(red, redf);
  rows.push_back(red);
  for (int m : c.lsmos_modes) {
    const SeparatedRep tv = lv.truncated(m), tp = lp.truncated(m);
    Row row{"LSMOS-" + std::to_string(m), tv.terms() * basis.size(), tp.terms() * basis.size()};
    std::vector<FineFields> a;
    t0 = wall_seconds();
    for (int i = 0; i < c.n_test; ++i) {
      const Vec mu = ts.mus.row(i).transpose();
      a.push_back({tv.eval(mu), tp.eval(mu)});
    }
    row.cpu = (wall_seconds() - t0) / c.n_test;
    accumulate(row, a);
    rows.push_back(row);
  }
  {
    Row row{"STAOMP", sv.Mt(), sp.Mt()};
    std::vector<FineFields> a;
    t0 = wall_seconds();
    for (int i = 0; i < c.n_test; ++i) {
      const Vec mu = ts.mus.row(i).transpose();
      a.push_back({sv.eval(mu), sp.eval(mu)});
    }
    row.cpu = (wall_seconds() - t0) / c.n_test;
    accumulate(row, a);
    rows.push_back(row);
  }
  CsvTable t({"method", "Mt_v", "Mt_p", "eps_v1", "eps_v2", "eps_p1", "eps_p2", "cpu_seconds"});
  for (const auto& row : rows)
    t.add({row.name, fmt(row.mt_v), fmt(row.mt_p), fmt(row.ev1), fmt(row.ev2), fmt(row.ep1), fmt(row.ep2),
           fmt(row.cpu)});
  r.tables["separation"] = t;
  fs::create_directories(c.out);
  write_representation((fs::path(c.out) / "staomp_velocity.rep").string(), sv);
  write_representation((fs::path(c.out) / "staomp_pressure.rep").string(), sp);
  r.manifest.artifacts["staomp_velocity"] = "staomp_velocity.rep";
  r.manifest.artifacts["staomp_pressure"] = "staomp_pressure.rep";
  return r;
}

TwoPhaseEnsemble simulate_ensemble(const Problem& p, const FlowSolver& flow, const Mat& params,
                                   const ExperimentConfig& c) {
  std::set<double> all(c.record_times.begin(), c.record_times.end());
  const double tend = c.record_times.back();
  for (double t = c.watercut_step; t <= tend * (1 + 1e-12); t += c.watercut_step) all.insert(t);
  TwoPhaseEnsemble e;
  e.times.assign(all.begin(), all.end());
  for (double t : c.record_times)
    e.sat_index.push_back(static_cast<int>(std::find(e.times.begin(), e.times.end(), t) - e.times.begin()));
  const int n = p.spaces->num_cells(), ns = static_cast<int>(c.record_times.size());
  const int m = static_cast<int>(params.rows());
  e.params = params;
  e.saturation.resize(static_cast<Eigen::Index>(n) * ns, m);
  e.watercut.resize(static_cast<Eigen::Index>(e.times.size()), m);
  const TwoPhaseConfig tc = twophase_config(c, e.times);
  const double t0 = wall_seconds();
  for (int j = 0; j < m; ++j) {
    const auto res = simulate(flow, p.coef->eval_kinv(params.row(j).transpose()), tc);
    for (int k = 0; k < ns; ++k) e.saturation.col(j).segment(k * n, n) = res.saturation.col(e.sat_index[k]);
    e.watercut.col(j) = res.watercut;
    e.max_mass_residual = std::max(e.max_mass_residual, res.max_mass_residual);
    e.min_S = std::min(e.min_S, res.min_S);
    e.max_S = std::max(e.max_S, res.max_S);
    e.steps += res.steps;
  }
  e.seconds_per_member = m > 0 ? (wall_seconds() - t0) / m : 0.0;
  return e;
}

StageResult run_twophase(const ExperimentConfig& c) {
  if (c.experiment != "twophase") throw ConfigError("the twophase stage needs experiment = twophase");
  const Problem p = make_problem(c);
  const FineSpaces& s = *p.spaces;
  const int n = s.num_cells();
  StageResult r;
  r.manifest = base_manifest(c, "twophase");
  const Offline off = run_offline(c, p, Selection::Greedy);
  offline_timings(r.manifest, off, "offline_");
  const ReducedSpace rs = bocv_prefix(off, c.max_basis);
  const FlowSolver flow(s, rs);

  const Mat train = draw(*p.coef, c.ensemble, c.seed, kEnsemble);
  const Mat eval = draw(*p.coef, c.n_eval, c.seed, kEval);
  const TwoPhaseEnsemble et = simulate_ensemble(p, flow, train, c);
  const TwoPhaseEnsemble ee = simulate_ensemble(p, flow, eval, c);
  r.manifest.timings["reduced_simulation_per_member"] = et.seconds_per_member;
  const int ns = static_cast<int>(c.record_times.size()), nt = static_cast<int>(et.times.size());

  // Surrogates.
  const PolynomialBasis basis(PolyFamily::Hermite, p.coef->dim(), c.sat_degree);
  Rng drng(c.seed, kDesign);
  const auto dsat = random_design(n * ns, c.sat_points * ns, c.ensemble, c.ensemble, drng);
  const auto dwc = random_design(nt, c.wc_points, c.ensemble, c.ensemble, drng);
  double t0 = wall_seconds();
  const SparseTensorRep ssat =
      saturation_surrogate(et.saturation, s.areas(), ns, train, c.sat_modes, basis, dsat, c.sat_eps);
  const SparseTensorRep swc = watercut_surrogate(et.watercut, train, c.wc_modes, basis, dwc, c.sat_eps);
  r.manifest.timings["surrogate_build"] = wall_seconds() - t0;

  Mat sat_sur(ee.saturation.rows(), c.n_eval), wc_sur(nt, c.n_eval);
  t0 = wall_seconds();
  for (int j = 0; j < c.n_eval; ++j) {
    const Vec mu = eval.row(j).transpose();
    sat_sur.col(j) = ssat.eval(mu);
    wc_sur.col(j) = swc.eval(mu);
  }
  const double t_sur = (wall_seconds() - t0) / c.n_eval;
  r.manifest.timings["surrogate_eval_per_member"] = t_sur;
  const Vec eps_s = saturation_errors(ee.saturation, sat_sur, s.areas(), ns);

  // Fine reference on the first evaluation members.
  Vec eps_fine = Vec::Constant(ns, std::nan(""));
  if (c.n_fine_reference > 0) {
    const FlowSolver fine(s);
    const TwoPhaseEnsemble ef = simulate_ensemble(p, fine, eval.topRows(c.n_fine_reference), c);
    r.manifest.timings["fine_simulation_per_member"] = ef.seconds_per_member;
    eps_fine = saturation_errors(ef.saturation, ee.saturation.leftCols(c.n_fine_reference), s.areas(), ns);
  }

  CsvTable te({"time", "pvi", "eps_s_surrogate", "eps_s_reduced_vs_fine"});
  const TwoPhaseConfig tc = twophase_config(c, c.record_times);
  for (int k = 0; k < ns; ++k)
    te.add({fmt(c.record_times[k]), fmt(c.record_times[k] * c.pvi_per_unit), fmt(eps_s[k]), fmt(eps_fine[k])});
  r.tables["twophase_errors"] = te;

  const EnsembleStats wst = ensemble_stats(ee.watercut), wss = ensemble_stats(wc_sur);
  const EnsembleStats wtr = ensemble_stats(et.watercut);
  CsvTable tw({"time", "mean_train", "mean_reduced", "var_reduced", "mean_surrogate", "var_surrogate"});
  for (int k = 0; k < nt; ++k)
    tw.add({fmt(et.times[k]), fmt(wtr.mean[k]), fmt(wst.mean[k]), fmt(wst.variance[k]), fmt(wss.mean[k]),
            fmt(wss.variance[k])});
  r.tables["watercut"] = tw;

  // Ensemble mean and variance fields of the training ensemble.
  fs::create_directories(c.out);
  const EnsembleStats sst = ensemble_stats(et.saturation);
  CsvTable hist({"time", "cell", "S_mean"});
  CsvTable front({"time", "variance_max_cell", "distance_to_front_cells"});
  for (int k = 0; k < ns; ++k) {
    const Vec mean = sst.mean.segment(k * n, n), var = sst.variance.segment(k * n, n);
    const std::string tag = std::to_string(static_cast<long long>(c.record_times[k]));
    write_raster((fs::path(c.out) / ("S_mean_t" + tag + ".txt")).string(), c.nx, c.ny, mean);
    write_raster((fs::path(c.out) / ("S_var_t" + tag + ".txt")).string(), c.nx, c.ny, var);
    r.manifest.artifacts["S_mean_t" + tag] = "S_mean_t" + tag + ".txt";
    r.manifest.artifacts["S_var_t" + tag] = "S_var_t" + tag + ".txt";
    for (int cell = 0; cell < n; ++cell) hist.add({fmt(c.record_times[k]), fmt(cell), fmt(mean[cell])});
    // Distance from the variance maximum to the nearest cell face where the
    // mean crosses 0.5.
    int arg = 0;
    var.maxCoeff(&arg);
    const GridHierarchy& g = *p.grid;
    double best = std::numeric_limits<double>::infinity();
    const auto a = g.cell_center(arg);
    for (int e = 0; e < g.num_edges(); ++e) {
      const auto cs = g.edge_cells(e);
      if (cs[0] < 0 || cs[1] < 0) continue;
      if ((mean[cs[0]] - 0.5) * (mean[cs[1]] - 0.5) > 0.0) continue;
      const auto m = g.edge_midpoint(e);
      best = std::min(best, std::hypot((m[0] - a[0]) / g.hx(), (m[1] - a[1]) / g.hy()));
    }
    front.add({fmt(c.record_times[k]), fmt(arg), fmt(best)});
  }
  hist.write((fs::path(c.out) / "saturation_history.csv").string());
  r.manifest.artifacts["saturation_history"] = "saturation_history.csv";
  r.tables["variance_front"] = front;

  CsvTable sum({"quantity", "value"});
  sum.add({"reduced_size", fmt(rs.size())});
  sum.add({"affine_terms", fmt(off.ad.size())});
  sum.add({"affine_tolerance", fmt(off.ad.achieved_tolerance())});
  sum.add({"Mt_saturation", fmt(ssat.Mt())});
  sum.add({"Mt_watercut", fmt(swc.Mt())});
  sum.add({"max_mass_residual", fmt(std::max(et.max_mass_residual, ee.max_mass_residual))});
  sum.add({"min_S", fmt(std::min(et.min_S, ee.min_S))});
  sum.add({"max_S", fmt(std::max(et.max_S, ee.max_S))});
  sum.add({"steps_total", fmt(et.steps + ee.steps)});
  sum.add({"min_watercut", fmt(std::min(et.watercut.minCoeff(), ee.watercut.minCoeff()))});
  sum.add({"max_watercut", fmt(std::max(et.watercut.maxCoeff(), ee.watercut.maxCoeff()))});
  sum.add({"reduced_seconds_per_member", fmt(et.seconds_per_member)});
  sum.add({"surrogate_seconds_per_member", fmt(t_sur)});
  sum.add({"pvi_per_unit", fmt(tc.pvi_per_unit)});
  r.tables["twophase_summary"] = sum;
  write_representation((fs::path(c.out) / "staomp_saturation.rep").string(), ssat);
  write_representation((fs::path(c.out) / "staomp_watercut.rep").string(), swc);
  r.manifest.artifacts["staomp_saturation"] = "staomp_saturation.rep";
  r.manifest.artifacts["staomp_watercut"] = "staomp_watercut.rep";
  CsvTable wcsv({"time", "value"});
  for (int k = 0; k < nt; ++k) wcsv.add({fmt(et.times[k]), fmt(wtr.mean[k])});
  wcsv.write((fs::path(c.out) / "watercut_mean.csv").string());
  r.manifest.artifacts["watercut_mean"] = "watercut_mean.csv";
  return r;
}

StageResult run(const ExperimentConfig& c) {
  if (c.experiment == "twophase") return run_twophase(c);
  if (c.experiment == "example2") return run_separate(c);
  return run_compare(c);
}

std::string write_stage(const ExperimentConfig& c, StageResult& r) {
  fs::create_directories(c.out);
  for (const auto& [name, t] : r.tables) {
    t.write((fs::path(c.out) / (name + ".csv")).string());
    r.manifest.tables[name] = table_json(t);
    r.manifest.artifacts[name] = name + ".csv";
  }
  {
    std::ofstream cfg(fs::path(c.out) / "config.ini");
    cfg << dump_config(c);
  }
  r.manifest.artifacts["config"] = "config.ini";
  return write_manifest(c.out, r.manifest);
}

Manifest report(const std::vector<std::string>& paths, const std::string& out_dir) {
  std::vector<Manifest> ms;
  for (const auto& p : paths) {
    Manifest m = read_manifest(p);
    const fs::path dir = fs::absolute(fs::path(p)).parent_path();
    for (auto& [k, v] : m.artifacts) v = (dir / v).lexically_normal().string();
    ms.push_back(std::move(m));
  }
  Manifest merged = merge_manifests(ms);
  fs::create_directories(out_dir);
  for (const auto& [name, j] : merged.tables) table_from_json(j).write((fs::path(out_dir) / (name + ".csv")).string());
  CsvTable timing({"key", "seconds"});
  for (const auto& [k, v] : merged.timings) timing.add({k, fmt(v)});
  timing.write((fs::path(out_dir) / "timings.csv").string());
  std::ofstream out(fs::path(out_dir) / "report.json");
  out << merged.to_json().dump(2) << '\n';
  return merged;
}

Vec multivariate_function(const Vec& mu, int nx, int ny) {
  if (mu.size() != 6) throw ConfigError("multivariate function takes six parameters");
  Vec u(static_cast<Eigen::Index>(nx) * ny);
  const double a = mu[0] * mu[1] * mu[2] / 3.0, b = mu[3] * mu[4] * mu[5] / 3.0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double x1 = (i + 0.5) / nx, x2 = (j + 0.5) / ny;
      u[j * nx + i] = x1 * mu[0] + x2 * mu[1] + std::sin(std::numbers::pi / 4.0 * (x1 + a)) +
                      std::cos(std::numbers::pi / 4.0 * (x2 + b));
    }
  return u;
}

SeparationStudy multivariate_study(int nx, int ny, int n_lsmos, int n_staomp, int n_points, int n_modes,
                                   int degree, double eps, int n_test, const std::vector<int>& modes,
                                   std::uint64_t seed) {
  const int n = nx * ny;
  const Vec w = Vec::Constant(n, 1.0 / n);
  auto sample = [](int m, Rng& rng) {
    Mat mus(m, 6);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < 6; ++k) mus(i, k) = rng.uniform(-1.0, 1.0);
    return mus;
  };
  auto snapshots = [&](const Mat& mus) {
    Mat s(n, mus.rows());
    for (int j = 0; j < mus.rows(); ++j) s.col(j) = multivariate_function(mus.row(j).transpose(), nx, ny);
    return s;
  };
  Rng r1(seed, kSeparation), r2(seed, kDesign), r3(seed, kTest);
  const PolynomialBasis basis(PolyFamily::Legendre, 6, degree);
  SeparationStudy st;
  st.Mg = basis.size();
  const Mat m1 = sample(n_lsmos, r1);
  const int mmax = *std::max_element(modes.begin(), modes.end());
  const SeparatedRep lr = lsmos(snapshots(m1), w, m1, basis, {-1.0, mmax});
  const Mat m2 = sample(n_staomp, r1);
  const auto design = random_design(n, n_points, n_staomp, n_staomp, r2);
  const SparseTensorRep sr = staomp(snapshots(m2), w, m2, n_modes, basis, design, eps);
  st.staomp_Mt = sr.Mt();
  const Mat mt = sample(n_test, r3);
  const Mat ut = snapshots(mt);
  for (int m : modes) {
    const SeparatedRep tr = lr.truncated(m);
    double err = 0.0;
    const double t0 = wall_seconds();
    Mat approx(n, n_test);
    for (int j = 0; j < n_test; ++j) approx.col(j) = tr.eval(mt.row(j).transpose());
    st.lsmos_time.push_back((wall_seconds() - t0) / n_test);
    for (int j = 0; j < n_test; ++j) err += weighted_rel(ut.col(j), approx.col(j), w);
    st.lsmos_err.push_back(err / n_test);
    st.lsmos_terms.push_back(tr.terms() * basis.size());
  }
  {
    double err = 0.0;
    const double t0 = wall_seconds();
    Mat approx(n, n_test);
    for (int j = 0; j < n_test; ++j) approx.col(j) = sr.eval(mt.row(j).transpose());
    st.staomp_time = (wall_seconds() - t0) / n_test;
    for (int j = 0; j < n_test; ++j) err += weighted_rel(ut.col(j), approx.col(j), w);
    st.staomp_err = err / n_test;
  }
  return st;
}

}  // namespace rmgms
