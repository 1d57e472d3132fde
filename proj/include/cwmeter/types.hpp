#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cwmeter {

// Thrown when a solver run has to stop (stability precheck, normalization
// drift, non-convergent scan).  Configuration / input problems use the
// standard std::invalid_argument / std::domain_error.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Qubit state as Pauli expectation values, r_i = <sigma_i> in [-1, 1].
struct BlochState {
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;

  double norm2() const { return rx * rx + ry * ry + rz * rz; }
};

// Throws std::invalid_argument if |r|^2 > 1 + 1e-12 or any component is not finite.
void validate(const BlochState& s);

// One magnet + bath parameter set.  Energies in model units, hbar = 1.
// N spins, Ising couplings J2 (quadratic) and J4 (quartic), system-magnet
// coupling g, dimensionless bath coupling gamma, inverse temperature beta,
// Debye cutoff Gamma.
struct ApparatusParams {
  int N = 0;
  double J2 = 0.0;
  double J4 = 0.0;
  double g = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
  double Gamma = 0.0;

  double temperature() const { return 1.0 / beta; }
};

void validate(const ApparatusParams& a);

// Debye cutoff large compared with every frequency produced in a run.
double default_debye_cutoff(const ApparatusParams& a, const ApparatusParams& ap);

// Magnetization eigenvalue grid m_i = -1 + 2 i / N, i = 0..N, with
// log-degeneracies ln G(m_i).  Values are built as (2 i - N) / N so that
// m_{N-i} == -m_i holds bit-exactly; logG is mirrored the same way.
class MagnetGrid {
 public:
  explicit MagnetGrid(int N);

  int N() const { return n_; }
  std::size_t size() const { return values_.size(); }
  double value(int i) const { return values_[static_cast<std::size_t>(i)]; }
  double log_degeneracy(int i) const { return logg_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& log_degeneracies() const { return logg_; }

  double spacing() const { return 2.0 / n_; }

  // Index of a grid value; throws std::invalid_argument for off-grid m.
  int index_of(double m) const;

 private:
  int n_;
  std::vector<double> values_;
  std::vector<double> logg_;
};

// Local measurement frame at (m, m'): field magnitude w >= 0 and direction
// cosines (ux, uz) in the x-z plane.  w == 0 uses the (0, 1) convention.
struct FieldFrame {
  double w = 0.0;
  double ux = 0.0;
  double uz = 1.0;
};

// Pair of real fields (P, Cu) over the joint (m, m') grid.  P is the joint
// magnetization distribution, Cu the spin correlator along the local frame.
// Row-major layout, index = i * (N'+1) + j with i over m and j over m'.
class JointField {
 public:
  JointField(MagnetGrid grid, MagnetGrid grid_prime, std::vector<double> p,
             std::vector<double> cu, double t);

  const MagnetGrid& grid() const { return grid_; }
  const MagnetGrid& grid_prime() const { return grid_prime_; }
  const std::vector<double>& p() const { return p_; }
  const std::vector<double>& cu() const { return cu_; }
  double t() const { return t_; }

  std::size_t rows() const { return grid_.size(); }
  std::size_t cols() const { return grid_prime_.size(); }
  std::size_t index(std::size_t i, std::size_t j) const { return i * cols() + j; }

  double p_at(std::size_t i, std::size_t j) const { return p_[index(i, j)]; }
  double cu_at(std::size_t i, std::size_t j) const { return cu_[index(i, j)]; }

 private:
  MagnetGrid grid_;
  MagnetGrid grid_prime_;
  std::vector<double> p_;
  std::vector<double> cu_;
  double t_;
};

// Probabilities of the four joint outcomes, ordered (++, +-, -+, --) with the
// first sign for the z apparatus and the second for the x apparatus.
struct OutcomeWeights {
  double pp = 0.0;
  double pm = 0.0;
  double mp = 0.0;
  double mm = 0.0;

  double sum() const { return pp + pm + mp + mm; }
};

// Throws if any weight < -tol or |sum - 1| > tol.
void validate_probabilities(const OutcomeWeights& w, double tol = 1e-9);

}  // namespace cwmeter
