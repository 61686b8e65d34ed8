#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace rmgms {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Warnings go to stderr and are counted so drivers can report them.
void warn(const std::string& msg);
std::size_t warning_count();
void set_quiet(bool quiet);

// Seeded generator with explicit uniform/normal transforms, so draws do not
// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
  double uniform();  // [0,1)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal();
  std::size_t index(std::size_t n);  // uniform in [0,n)
  std::uint64_t bits() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// k distinct indices from [0,n), in draw order.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng);

double wall_seconds();

}  // namespace rmgms
