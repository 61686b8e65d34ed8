#pragma once

#include "rmgms/common.hpp"
#include "rmgms/mixedfem.hpp"
#include "rmgms/reduced.hpp"
#include "rmgms/separation.hpp"

#include <memory>
#include <vector>

namespace rmgms {

struct TwoPhaseConfig {
  double viscosity_ratio = 0.1;  // mu_w / mu_o
  double mu_o = 1.0;
  double dt = 0.0;               // model time; 0 picks the CFL step
  double cfl_safety = 0.5;
  // Record times are given in record units; one unit is this many pore
  // volumes injected.
  double pvi_per_unit = 2.5e-4;
  std::vector<double> record_times{500, 600, 1000, 1500, 2000};
  bool linear_flux = false;      // f_w(S) = S, for transport tests
};

double fractional_flow(double S, const TwoPhaseConfig& cfg);
double fractional_flow_derivative(double S, const TwoPhaseConfig& cfg);
double mobility(double S, const TwoPhaseConfig& cfg);
// sup of f_w' on [0, 1].
double max_flux_derivative(const TwoPhaseConfig& cfg);

// Source density q: +1 on the top-left coarse block, -1 on the bottom-right.
Vec two_spot_source(const GridHierarchy& g);
// Producer cells (q < 0).
std::vector<int> producer_cells(const Vec& q);
// Model time for a record time: record * pvi_per_unit * pore volume / injection rate.
double model_time(const GridHierarchy& g, const Vec& q, const TwoPhaseConfig& cfg, double record);

// Velocity for a cellwise k^{-1}/eta, either by the full fine solve or in a
// reduced space through its sparse local basis.
class FlowSolver {
 public:
  explicit FlowSolver(const FineSpaces& s);
  FlowSolver(const FineSpaces& s, const ReducedSpace& rs);
  Vec velocity(const Vec& kinv_eff) const;
  // Reduced path through the orthonormal basis, for validation.
  Vec velocity_dense(const Vec& kinv_eff) const;
  bool reduced() const { return rs_ != nullptr; }
  const FineSpaces& spaces() const { return *s_; }

 private:
  const FineSpaces* s_;
  const ReducedSpace* rs_ = nullptr;
  SpMat BX_;
  Vec FN_;
};

struct TransportStep {
  Vec S;
  double water_in = 0.0;       // integral of |K| q_s
  double boundary_out = 0.0;   // water leaving through the domain boundary
  double mass_residual = 0.0;  // balance defect of the update
};

// Largest stable step for the given edge velocities.
double cfl_step(const FineSpaces& s, const Vec& v, const Vec& q, const TwoPhaseConfig& cfg,
                int* limiting_cell = nullptr);

// Explicit upwind update. Throws ConfigError naming the limiting cell when
// dt exceeds the CFL bound.
TransportStep transport_step(const FineSpaces& s, const Vec& S, const Vec& v, const Vec& q,
                             const TwoPhaseConfig& cfg, double dt);

struct TwoPhaseState {
  Vec S;
  Vec v;
  double t = 0.0;
};

// One IMPES step: velocity at the current saturation, then transport.
TwoPhaseState impes_step(const TwoPhaseState& state, const FlowSolver& flow, const Vec& kinv, const Vec& q,
                         const TwoPhaseConfig& cfg, double dt, TransportStep* info = nullptr);

double water_cut(const Vec& S, const Vec& q, const Vec& areas, const TwoPhaseConfig& cfg);

struct TwoPhaseResult {
  std::vector<double> times;   // record units
  Mat saturation;              // cells x times
  Vec watercut;                // per recorded time
  int steps = 0;
  double max_mass_residual = 0.0;
  double min_S = 0.0, max_S = 0.0;
};

TwoPhaseResult simulate(const FlowSolver& flow, const Vec& kinv, const TwoPhaseConfig& cfg);

struct EnsembleStats {
  Vec mean, variance;
};
// Columns are samples; unbiased variance.
EnsembleStats ensemble_stats(const Mat& fields);

// Mean over samples of relative L1 saturation errors, one value per time.
// Columns of `reference` and `approx` are samples, rows cells x times.
Vec saturation_errors(const Mat& reference, const Mat& approx, const Vec& areas, int n_times);

// Sparse tensor surrogates over parameter samples. Saturation rows are
// time-major (time * cells + cell).
SparseTensorRep saturation_surrogate(const Mat& snapshots, const Vec& areas, int n_times, const Mat& params,
                                     int n_modes, const PolynomialBasis& basis, const SampleDesign& design,
                                     double eps, int max_terms = -1);
SparseTensorRep watercut_surrogate(const Mat& snapshots, const Mat& params, int n_modes,
                                   const PolynomialBasis& basis, const SampleDesign& design, double eps,
                                   int max_terms = -1);

}  // namespace rmgms
