#include <doctest.h>

#include "rmgms/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace rmgms;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rmgms_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small parameter-independent problem.
ExperimentConfig tiny_custom(const fs::path& out) {
  ExperimentConfig c;
  c.experiment = "custom";
  c.nx = c.ny = 12;
  c.ncx = c.ncy = 2;
  c.contrast = 50;
  c.field_seed = 4;
  c.n_train = 6;
  c.n_op = 2;
  c.n_validate = 3;
  c.snapshot_basis = 3;
  c.max_basis = 3;
  c.affine_tol = 1e-8;
  c.affine_degree = 0;
  c.affine_terms = 2;
  c.n_test = 4;
  c.out = out.string();
  return c;
}

double cell(const CsvTable& t, std::size_t row, const std::string& col) {
  const auto& cs = t.columns();
  const auto k = std::find(cs.begin(), cs.end(), col) - cs.begin();
  return std::stod(t.rows().at(row).at(k));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config dump parses back to the same text") {
  ExperimentConfig c;
  c.experiment = "twophase";
  c.seed = 77;
  c.record_times = {100, 250.5};
  c.lsmos_modes = {2, 7};
  c.raster = "field.txt";
  const std::string text = dump_config(c);
  const ExperimentConfig d = parse_config(text);
  CHECK(dump_config(d) == text);
  CHECK(d.seed == 77);
  CHECK(d.record_times == std::vector<double>{100, 250.5});
  CHECK(d.lsmos_modes == std::vector<int>{2, 7});
  CHECK(d.raster == "field.txt");
}

TEST_CASE("partial config keeps defaults") {
  const ExperimentConfig c = parse_config("[grid]\nnx = 20\nny = 20\nncx = 2\nncy = 2\n");
  CHECK(c.nx == 20);
  CHECK(c.experiment == "example1");
  CHECK(c.n_train == ExperimentConfig{}.n_train);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("[grid]\nnx = 41\n"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[grid]\nnx = 41\n"), doctest::Contains("not divisible"), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid]\nnx = forty\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid]\nnz = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[offline]\nn_op = 60\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[offline]\nbasis = svd\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\nname = example3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[twophase]\nrecord_times = 5,3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[separation]\nlsmos_modes = 1,x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid\nnx = 4\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("config hash ignores the output directory") {
  ExperimentConfig a, b;
  b.out = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("full-scale sizes") {
  ExperimentConfig c;
  c = paper_scale(c);
  CHECK(c.nx == 80);
  CHECK(c.ncx == 8);
  CHECK(c.n_train == 200);
  ExperimentConfig t;
  t.experiment = "twophase";
  t = paper_scale(t);
  CHECK(t.nx == 56);
  CHECK(t.ensemble == 600);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("csv round trip with quoting") {
  const fs::path d = scratch("csv");
  CsvTable t({"name", "value"});
  t.add({"plain", fmt(0.1)});
  t.add({"with,comma", fmt(3)});
  t.add({"with \"quote\"", fmt(-2.5e-300)});
  t.write((d / "t.csv").string());
  const CsvTable r = CsvTable::read((d / "t.csv").string());
  CHECK(r.columns() == t.columns());
  CHECK(r.rows() == t.rows());
  CHECK(std::stod(r.rows()[0][1]) == 0.1);
  CHECK_THROWS_AS(t.add({"short"}), ConfigError);
}

TEST_CASE("bundle round trip is exact") {
  const fs::path d = scratch("bundle");
  ArtifactBundle b;
  Rng rng(3);
  Mat A(4, 3);
  for (int i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
  b.arrays["A"] = A;
  b.arrays["empty"] = Mat(0, 2);
  b.meta = {{"kind", "test"}};
  write_bundle((d / "b.bin").string(), b);
  const ArtifactBundle r = read_bundle((d / "b.bin").string());
  CHECK(r.arrays.at("A") == A);
  CHECK(r.arrays.at("empty").cols() == 2);
  CHECK(r.meta["kind"] == "test");
  std::ofstream((d / "bad.bin").string()) << "not a bundle";
  CHECK_THROWS_AS(read_bundle((d / "bad.bin").string()), FormatError);
}

TEST_CASE("representation round trip evaluates identically") {
  const fs::path d = scratch("rep");
  SparseTensorRep rep;
  rep.basis = PolynomialBasis(PolyFamily::Hermite, 2, 3);
  rep.modes = Mat::Random(5, 2);
  rep.terms = {{0, 0, 1.5}, {4, 1, -0.25}, {9, 0, 1e-7}};
  rep.residual = 3e-4;
  write_representation((d / "r.rep").string(), rep);
  const SparseTensorRep r = read_representation((d / "r.rep").string());
  CHECK(r.Mt() == 3);
  CHECK(r.basis.family() == PolyFamily::Hermite);
  CHECK(r.residual == rep.residual);
  const Vec mu = (Vec(2) << 0.3, -1.2).finished();
  CHECK((r.eval(mu) - rep.eval(mu)).norm() == 0.0);
}

TEST_CASE("manifest validation") {
  const fs::path d = scratch("manifest");
  Manifest m;
  m.experiment = "custom.test";
  m.config_hash = "00";
  m.timings["stage"] = 0.5;
  m.artifacts["missing"] = "nope.csv";
  CHECK_THROWS_AS(write_manifest(d.string(), m), FormatError);
  m.artifacts.clear();
  const std::string path = write_manifest(d.string(), m);
  const Manifest r = read_manifest(path);
  CHECK(r.timings.at("stage") == 0.5);

  Json j = m.to_json();
  j["version"] = kManifestVersion + 1;
  CHECK_THROWS_WITH_AS(Manifest::from_json(j), doctest::Contains("version"), FormatError);
  j = m.to_json();
  j["timings"]["stage"] = -1.0;
  CHECK_THROWS_AS(Manifest::from_json(j), FormatError);
  j = m.to_json();
  j.erase("config_hash");
  CHECK_THROWS_AS(Manifest::from_json(j), FormatError);
}

TEST_CASE("merge: identity and row union") {
  Manifest a;
  a.experiment = "a";
  CsvTable t1({"method", "err"});
  t1.add({"LSMOS", "0.1"});
  a.tables["errors"] = table_json(t1);
  a.timings["x"] = 1.0;
  const Manifest same = merge_manifests({a});
  CHECK(same.tables == a.tables);
  CHECK(same.timings == a.timings);

  Manifest b;
  b.experiment = "b";
  CsvTable t2({"method", "err"});
  t2.add({"STAOMP", "0.2"});
  t2.add({"LSMOS", "0.1"});
  b.tables["errors"] = table_json(t2);
  const Manifest u = merge_manifests({a, b});
  const CsvTable m = table_from_json(u.tables.at("errors"));
  CHECK(m.rows().size() == 2);
  CHECK(u.timings.count("a.x") == 1);

  Manifest c;
  c.experiment = "c";
  c.tables["errors"] = table_json(CsvTable({"other"}));
  CHECK_THROWS_AS(merge_manifests({a, c}), FormatError);
  CHECK_THROWS_AS(merge_manifests({}), ConfigError);
}

TEST_CASE("validate rejects bad configs before any work") {
  ExperimentConfig c;
  c.nx = 30;
  CHECK_THROWS_AS(make_problem(c), ConfigError);
}

TEST_CASE("fine-solve stage writes loadable artifacts") {
  const fs::path d = scratch("fine");
  ExperimentConfig c = tiny_custom(d);
  c.experiment = "example1";
  c.affine_degree = 4;
  StageResult r = run_fine_solve(c);
  const std::string path = write_stage(c, r);
  const Manifest m = read_manifest(path);
  CHECK(m.ok);
  CHECK(m.config_hash == config_hash(c));
  for (const auto& [k, v] : m.timings) CHECK(v >= 0.0);
  const ArtifactBundle b = read_bundle((d / "fine_solution.bin").string());
  CHECK(b.arrays.at("v").rows() == 2 * 12 * 13);
  const CsvTable t = CsvTable::read((d / "fine_solve.csv").string());
  CHECK(std::abs(std::stod(t.rows().at(4).at(1))) <= 1e-10);
  const RasterField f = load_raster((d / "fine_pressure.txt").string(), false);
  CHECK(f.nx == 12);
  CHECK((f.values - b.arrays.at("p")).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + b.arrays.at("p").norm()));

  // Report of one manifest reproduces its tables.
  const Manifest rep = report({path}, (d / "report").string());
  CHECK(rep.tables == m.tables);
  CHECK(fs::exists(d / "report" / "fine_solve.csv"));
  CHECK(fs::path(rep.artifacts.at("fine_solution")).is_absolute());
}

TEST_CASE("parameter-independent coefficient: all four methods coincide") {
  const fs::path d = scratch("custom");
  const ExperimentConfig c = tiny_custom(d);
  const StageResult r = run_compare(c);
  const CsvTable& t = r.tables.at("compare");
  std::map<std::string, double> at_max;
  std::map<std::pair<std::string, int>, double> curve;
  for (std::size_t i = 0; i < t.rows().size(); ++i) {
    const std::string method = t.rows()[i][0];
    const int n = std::stoi(t.rows()[i][3]);
    curve[{method, n}] = cell(t, i, "eps_v");
    if (n == c.max_basis) at_max[method] = cell(t, i, "eps_v");
  }
  REQUIRE(at_max.size() == 4);
  for (const auto& [m, e] : at_max) CHECK(std::abs(e - at_max["GBOCV"]) <= 1e-8);
  for (int n = 1; n <= c.max_basis; ++n) {
    CHECK(std::abs(curve[{"GBOCV", n}] - curve[{"RBOCV", n}]) <= 1e-8);
    CHECK(std::abs(curve[{"GPOD", n}] - curve[{"RPOD", n}]) <= 1e-8);
  }
}

TEST_CASE("same config and seed give identical tables") {
  const fs::path d = scratch("determinism");
  ExperimentConfig c = tiny_custom(d);
  c.experiment = "example1";
  c.affine_degree = 30;
  c.affine_terms = 10;
  c.affine_tol = 1e-3;
  const StageResult a = run_compare(c);
  const StageResult b = run_compare(c);
  CHECK(a.tables.at("compare").rows() == b.tables.at("compare").rows());
  CHECK(a.tables.at("compare_samples").rows() == b.tables.at("compare_samples").rows());
  c.seed = 2;
  const StageResult e = run_compare(c);
  CHECK(a.tables.at("compare").rows() != e.tables.at("compare").rows());
}

TEST_CASE("multivariate function values") {
  const Vec mu = Vec::Zero(6);
  const Vec u = multivariate_function(mu, 2, 1);
  CHECK(u[0] == doctest::Approx(std::sin(M_PI / 16) + std::cos(M_PI / 8)).epsilon(1e-14));
  CHECK(u[1] == doctest::Approx(std::sin(3 * M_PI / 16) + std::cos(M_PI / 8)).epsilon(1e-14));
  Vec m2(6);
  m2 << 1, 2, 3, -1, 1, 1;
  const Vec v = multivariate_function(m2, 1, 1);
  CHECK(v[0] == doctest::Approx(0.5 + 1.0 + std::sin(M_PI / 4 * 2.5) + std::cos(M_PI / 4 * (0.5 - 1.0 / 3))));
  CHECK_THROWS_AS(multivariate_function(Vec::Zero(5), 2, 2), ConfigError);
}

}  // TEST_SUITE
