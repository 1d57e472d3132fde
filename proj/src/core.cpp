#include "cwmeter/core.hpp"

#include <cmath>
#include <limits>

namespace cwmeter {

void validate(const BlochState& s) {
  if (!std::isfinite(s.rx) || !std::isfinite(s.ry) || !std::isfinite(s.rz))
    throw std::invalid_argument("BlochState: components must be finite");
  if (s.norm2() > 1.0 + 1e-12)
    throw std::invalid_argument("BlochState: |r|^2 exceeds 1 (unphysical qubit state)");
}

void validate(const ApparatusParams& a) {
  if (a.N < 1) throw std::invalid_argument("ApparatusParams: N must be a positive integer");
  if (!(a.J2 >= 0.0) || !(a.J4 >= 0.0))
    throw std::invalid_argument("ApparatusParams: J2, J4 must be >= 0");
  if (a.J4 > 0.0 && !(a.J2 < 3.0 * a.J4))
    throw std::invalid_argument("ApparatusParams: first-order regime requires J2 < 3 J4");
  if (!(a.g >= 0.0)) throw std::invalid_argument("ApparatusParams: g must be >= 0");
  if (!(a.gamma > 0.0)) throw std::invalid_argument("ApparatusParams: gamma must be > 0");
  if (!(a.beta > 0.0)) throw std::invalid_argument("ApparatusParams: beta must be > 0");
  if (!(a.Gamma > 0.0)) throw std::invalid_argument("ApparatusParams: Gamma must be > 0");
}

double default_debye_cutoff(const ApparatusParams& a, const ApparatusParams& ap) {
  double scale = std::max(a.J2 + a.J4, std::max(ap.J2 + ap.J4, std::max(a.g, ap.g)));
  if (scale <= 0.0) scale = 1.0;
  return 1000.0 * scale;
}

MagnetGrid::MagnetGrid(int N) : n_(N) {
  if (N < 1) throw std::invalid_argument("MagnetGrid: N must be a positive integer");
  values_.resize(static_cast<std::size_t>(N) + 1);
  logg_.resize(values_.size());
  for (int i = 0; i <= N; ++i)
    values_[static_cast<std::size_t>(i)] = (2.0 * i - N) / N;
  // lgamma evaluated once per half and mirrored: G(m) = G(-m) exactly.
  const double lg_n = std::lgamma(static_cast<double>(N) + 1.0);
  for (int i = 0; i <= N / 2; ++i) {
    double v = lg_n - std::lgamma(static_cast<double>(i) + 1.0) -
               std::lgamma(static_cast<double>(N - i) + 1.0);
    logg_[static_cast<std::size_t>(i)] = v;
    logg_[static_cast<std::size_t>(N - i)] = v;
  }
}

int MagnetGrid::index_of(double m) const {
  double pos = (m + 1.0) * n_ / 2.0;
  long long i = std::llround(pos);
  if (i < 0 || i > n_) throw std::invalid_argument("MagnetGrid: m outside [-1, 1]");
  double mi = values_[static_cast<std::size_t>(i)];
  if (std::abs(m - mi) > 1e-12)
    throw std::invalid_argument("MagnetGrid: m is not a grid value");
  return static_cast<int>(i);
}

double degeneracy_log(int N, double m) {
  MagnetGrid grid(N);
  return grid.log_degeneracy(grid.index_of(m));
}

double degeneracy_log_stirling(int N, double m) {
  if (!(std::abs(m) < 1.0))
    throw std::domain_error("degeneracy_log_stirling: requires |m| < 1");
  const double one_m2 = 1.0 - m * m;
  double expo = -(N / 2.0) * (std::log(one_m2 / 4.0) + m * std::log((1.0 + m) / (1.0 - m)));
  // Full Stirling prefactor sqrt(2 / (pi N (1 - m^2))) from applying
  // n! ~ sqrt(2 pi n) (n/e)^n to all three factorials.
  double pref = 0.5 * (std::log(2.0) - std::log(M_PI) - std::log(static_cast<double>(N)) -
                       std::log(one_m2));
  return expo + pref;
}

std::vector<double> initial_magnet_dist(const MagnetGrid& grid) {
  const double ln2n = grid.N() * std::log(2.0);
  std::vector<double> p(grid.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(grid.log_degeneracy(static_cast<int>(i)) - ln2n);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> gaussian_magnet_dist(const MagnetGrid& grid) {
  const double n = grid.N();
  std::vector<double> p(grid.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double m = grid.value(static_cast<int>(i));
    p[i] = std::sqrt(n / (2.0 * M_PI)) * std::exp(-0.5 * n * m * m);
  }
  return p;
}

FieldFrame field_frame(double m, double mp, const ApparatusParams& a,
                       const ApparatusParams& ap) {
  const double az = a.N * a.g * m;
  const double ax = ap.N * ap.g * mp;
  const double w = std::sqrt(az * az + ax * ax);
  if (w == 0.0) return FieldFrame{0.0, 0.0, 1.0};
  return FieldFrame{w, ax / w, az / w};
}

JointField init_joint_field(const BlochState& s, const ApparatusParams& a,
                            const ApparatusParams& ap) {
  validate(s);
  validate(a);
  validate(ap);
  MagnetGrid grid(a.N);
  MagnetGrid grid_p(ap.N);
  const std::vector<double> p0 = initial_magnet_dist(grid);
  const std::vector<double> p0p = initial_magnet_dist(grid_p);

  const std::size_t rows = grid.size(), cols = grid_p.size();
  std::vector<double> p(rows * cols), cu(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double m = grid.value(static_cast<int>(i));
    for (std::size_t j = 0; j < cols; ++j) {
      const double mp = grid_p.value(static_cast<int>(j));
      const FieldFrame f = field_frame(m, mp, a, ap);
      const double w = p0[i] * p0p[j];
      p[i * cols + j] = w;
      cu[i * cols + j] = (f.uz * s.rz + f.ux * s.rx) * w;
    }
  }
  return JointField(std::move(grid), std::move(grid_p), std::move(p), std::move(cu), 0.0);
}

JointField::JointField(MagnetGrid grid, MagnetGrid grid_prime, std::vector<double> p,
                       std::vector<double> cu, double t)
    : grid_(std::move(grid)),
      grid_prime_(std::move(grid_prime)),
      p_(std::move(p)),
      cu_(std::move(cu)),
      t_(t) {
  const std::size_t n = grid_.size() * grid_prime_.size();
  if (p_.size() != n || cu_.size() != n)
    throw std::invalid_argument("JointField: field size does not match the grids");
  double sum = 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sum += p_[k];
    worst = std::max(worst, std::abs(cu_[k]) - p_[k]);
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("JointField: P is not normalized");
  if (worst > 1e-9)
    throw std::invalid_argument("JointField: |Cu| exceeds P beyond tolerance");
}

void validate_probabilities(const OutcomeWeights& w, double tol) {
  for (double v : {w.pp, w.pm, w.mp, w.mm})
    if (!(v >= -tol)) throw std::invalid_argument("OutcomeWeights: negative probability");
  if (std::abs(w.sum() - 1.0) > tol)
    throw std::invalid_argument("OutcomeWeights: probabilities do not sum to 1");
}

}  // namespace cwmeter
