#pragma once

#include "rmgms/common.hpp"
#include "rmgms/fields.hpp"
#include "rmgms/io.hpp"
#include "rmgms/reduced.hpp"
#include "rmgms/separation.hpp"
#include "rmgms/twophase.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rmgms {

struct ExperimentConfig {
  std::string experiment = "example1";  // example1 | example2 | twophase | custom
  std::uint64_t seed = 1;
  std::string out = "out";

  // [grid]
  int nx = 40, ny = 40, ncx = 4, ncy = 4;

  // [field]
  std::string raster;              // optional file replacing the generated field
  double contrast = 1e4;
  std::uint64_t field_seed = 1;
  int kle_terms = 12;
  double kle_sigma2 = 1.0, kle_corr = 0.2, kle_mean = 6.0;

  // [offline]
  int n_train = 50;
  int n_op = 5;
  int n_validate = 20;
  int snapshot_basis = 5;   // GMsFE functions per edge and selected parameter
  int max_basis = 5;        // reduced functions per edge
  std::string selection = "greedy";  // greedy | random
  std::string basis = "bocv";        // bocv | pod
  double eps_star = 0.0;
  double affine_tol = 1e-4;
  int affine_degree = 4;
  int affine_terms = 60;
  int n_affine = 0;         // samples fitting the affine form; 0 = max(n_train, 10 x basis size)

  // [online]
  int n_test = 100;
  double solver_tol = 1e-9;

  // [separation]
  int n_t = 200;
  std::string family = "legendre";
  int degree = 4;
  std::vector<int> lsmos_modes{3, 4, 5};
  int staomp_modes = 6;
  int staomp_samples = 70;
  int staomp_points = 100;
  double eps_on = 1e-4;

  // [twophase]
  int ensemble = 50;
  int n_eval = 20;
  std::vector<double> record_times{500, 600, 1000, 1500, 2000};
  double watercut_step = 50.0;
  double pvi_per_unit = 2.5e-4;
  double viscosity_ratio = 0.1;
  double cfl_safety = 0.5;
  double log_contrast_base = 100.0;   // contrast of the channel field behind kappa_2
  int sat_modes = 4;
  int wc_modes = 6;
  int sat_points = 64;
  int wc_points = 18;
  double sat_eps = 1e-3;
  int sat_degree = 3;
  int n_fine_reference = 0;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& ini_text);
std::string dump_config(const ExperimentConfig& c);  // INI text, round-trips through parse_config
void validate(const ExperimentConfig& c);
// Hash of the configuration without the output directory.
std::string config_hash(const ExperimentConfig& c);
// Replace sizes by those of the full-scale study.
ExperimentConfig paper_scale(ExperimentConfig c);

// Grid, fine spaces with the source of the experiment, and the coefficient.
struct Problem {
  std::unique_ptr<GridHierarchy> grid;
  std::unique_ptr<FineSpaces> spaces;
  std::optional<ParametricCoefficient> coef;
  RasterField field;
  Vec q;  // two-phase source density, empty otherwise
};
Problem make_problem(const ExperimentConfig& c);

// Offline stage for one selection strategy.
struct Offline {
  AffineDecomposition ad;
  std::unique_ptr<ReducedContext> ctx;
  StabilityConstants sc;
  Mat train;
  std::vector<int> selected;
  std::vector<double> greedy_eps;
  SnapshotLibrary lib;
  std::vector<FineSolution> validation;
  BocvResult bocv;
  double t_affine = 0, t_select = 0, t_library = 0, t_bocv = 0;
};

enum class Selection { Greedy, Random };
// Training, validation and random-selection draws come from fixed streams of
// c.seed, so both strategies see the same sets.
Offline run_offline(const ExperimentConfig& c, const Problem& p, Selection sel);

// Reduced space of the first n BOCV groups, or POD with n modes per edge.
ReducedSpace bocv_prefix(const Offline& off, int n);
ReducedSpace pod_space(const Offline& off, int n);

struct TestSet {
  Mat mus;
  std::vector<FineFields> ref;
};
TestSet make_test_set(const Problem& p, int n, std::uint64_t seed);

// Per-sample relative L2 velocity and pressure errors.
struct SampleErrors {
  Vec v, p;
  double mean_v() const { return v.size() ? v.mean() : 0.0; }
  double mean_p() const { return p.size() ? p.mean() : 0.0; }
};
SampleErrors reduced_errors(const Problem& p, const ReducedSpace& rs, const AffineDecomposition& ad,
                            const TestSet& ts, double tol);

// Stage outputs: tables written as CSV under c.out plus the manifest.
struct StageResult {
  Manifest manifest;
  std::map<std::string, CsvTable> tables;
};

StageResult run_fine_solve(const ExperimentConfig& c);
StageResult run_offline_stage(const ExperimentConfig& c);
StageResult run_online_stage(const ExperimentConfig& c);
StageResult run_compare(const ExperimentConfig& c);
StageResult run_separate(const ExperimentConfig& c);
StageResult run_twophase(const ExperimentConfig& c);
// Dispatch on the experiment tag.
StageResult run(const ExperimentConfig& c);

// Writes tables and manifest to c.out; returns the manifest path.
std::string write_stage(const ExperimentConfig& c, StageResult& r);

// Merged report of several manifests; tables written under out_dir.
Manifest report(const std::vector<std::string>& manifest_paths, const std::string& out_dir);

// Multivariate test function of the separation study, evaluated on the
// nx x ny cell midpoints of the unit square.
Vec multivariate_function(const Vec& mu, int nx, int ny);

struct SeparationStudy {
  std::vector<double> lsmos_err;   // per retained mode count
  std::vector<int> lsmos_terms;
  std::vector<double> lsmos_time;  // seconds per evaluation
  double staomp_err = 0.0;
  int staomp_Mt = 0;
  double staomp_time = 0.0;
  int Mg = 0;
};

// Table-1 style study: LSMOS on n_lsmos samples, STAOMP on n_staomp samples,
// errors on n_test fresh samples.
SeparationStudy multivariate_study(int nx, int ny, int n_lsmos, int n_staomp, int n_points, int n_modes,
                                   int degree, double eps, int n_test, const std::vector<int>& modes,
                                   std::uint64_t seed);

// Two-phase ensemble outputs used by the stage and by acceptance checks.
struct TwoPhaseEnsemble {
  std::vector<double> times;       // all recorded times (record units)
  std::vector<int> sat_index;      // positions of the saturation record times
  Mat params;                      // members x p
  Mat saturation;                  // (sat times x cells) x members
  Mat watercut;                    // times x members
  double max_mass_residual = 0.0;
  double min_S = 0.0, max_S = 0.0;
  double seconds_per_member = 0.0;
  int steps = 0;
};

TwoPhaseEnsemble simulate_ensemble(const Problem& p, const FlowSolver& flow, const Mat& params,
                                   const ExperimentConfig& c);

}  // namespace rmgms
