#pragma once

#include <cstdint>
#include <span>

#include "cwmeter/bath.hpp"
#include "cwmeter/types.hpp"

namespace cwmeter {

// ---------------------------------------------------------------------------
// Dephasing analytics
// ---------------------------------------------------------------------------

// Single apparatus: transverse components decay as exp(-t^2/tau_d^2) with
// tau_d = 1 / (sqrt(2 N) g); rz is conserved exactly.
BlochState dephasing_single(double t, const BlochState& s, const ApparatusParams& a);

double dephasing_time(const ApparatusParams& a);

// Joint apparatuses: explicit double grid sum of the precession about the
// local u(m, m') axis at frequency w(m, m'), weighted by P0 P0'.  Cu is
// conserved pointwise; (Cv, Cy) rotate by the angle w t.
BlochState dephasing_joint_numeric(double t, const BlochState& s,
                                   const ApparatusParams& a, const ApparatusParams& ap);

// Closed-form large-N limits: ry -> 0, rx -> rx sqrt(N')g'/(sqrt(N)g+sqrt(N')g'),
// rz -> rz sqrt(N)g/(sqrt(N)g+sqrt(N')g').
BlochState dephasing_joint_asymptote(const BlochState& s, const ApparatusParams& a,
                                     const ApparatusParams& ap);

// ---------------------------------------------------------------------------
// Registration master equation on the joint grid
// ---------------------------------------------------------------------------

// Precomputed transition coefficients of the reduced (P, Cu) master equation
// for one apparatus pair.  Fields outside the grid are identically zero; the
// (1 -+ m) zeros at the matching boundaries make total mass conservation a
// telescoping identity.
class RegistrationOperator {
 public:
  RegistrationOperator(const ApparatusParams& a, const ApparatusParams& ap);

  struct Workspace {
    std::vector<double> gp, gm, hp, hm;
    std::vector<double> big_gp, big_gm, big_hp, big_hm;
  };

  Workspace make_workspace() const;

  // d/dt of (P, Cu).  All spans must have size rows() * cols().
  void rhs(std::span<const double> p, std::span<const double> cu, std::span<double> dp,
           std::span<double> dcu, Workspace& ws) const;

  std::size_t rows() const { return ni_; }
  std::size_t cols() const { return nj_; }
  const MagnetGrid& grid() const { return grid_; }
  const MagnetGrid& grid_prime() const { return grid_prime_; }

  // Largest total outflow rate over the grid (stability scale).
  double max_outflow_rate() const { return max_rate_; }

  double tau() const { return tau_; }  // 1 / (gamma J4) of apparatus A

 private:
  MagnetGrid grid_;
  MagnetGrid grid_prime_;
  std::size_t ni_, nj_;
  double max_rate_ = 0.0;
  double tau_ = 0.0;
  // (gamma N / 2)-scaled alpha/beta coefficients, unprimed (m shifts) and
  // primed (m' shifts), plus the u.u neighbor products for the Cu stencil.
  std::vector<double> ap_, am_, bp_, bm_;
  std::vector<double> app_, amp_, bpp_, bmp_;
  std::vector<double> cpx_, cmx_, cpy_, cmy_;
};

// Convenience wrapper: derivative fields of a JointField.
std::pair<std::vector<double>, std::vector<double>> registration_rhs(
    const JointField& field, const ApparatusParams& a, const ApparatusParams& ap);

// ---------------------------------------------------------------------------
// Full four-field equations (short-time validation of the reduced solver)
// ---------------------------------------------------------------------------

struct FullField {
  std::vector<double> p, cx, cy, cz;
};

class FullOperator {
 public:
  FullOperator(const ApparatusParams& a, const ApparatusParams& ap);

  void rhs(const FullField& y, FullField& dy) const;
  FullField initial_state(const BlochState& s) const;
  void step_rk4(FullField& y, double dt) const;

  std::size_t rows() const { return ni_; }
  std::size_t cols() const { return nj_; }
  double max_frequency() const { return wmax_; }
  double max_outflow_rate() const { return max_rate_; }

  // Projection onto the local frame: cu = ux cx + uz cz.
  std::vector<double> project_cu(const FullField& y) const;

 private:
  MagnetGrid grid_, grid_prime_;
  std::size_t ni_, nj_;
  double wmax_ = 0.0, max_rate_ = 0.0;
  std::vector<double> w_, ux_, uz_;
  std::vector<double> ap_, am_, bp_, bm_, kp_, km_;
  std::vector<double> app_, amp_, bpp_, bmp_, kpp_, kmp_;
};

// ---------------------------------------------------------------------------
// Time stepping
// ---------------------------------------------------------------------------

enum class Integrator { euler, rk4 };

// Times are in units of tau = 1 / (gamma J4) of apparatus A.  dt_tau == 0
// selects the default step 0.01 / max_outflow_rate.  Fields are identically
// zero outside the grid (fixed convention).
struct SolverConfig {
  double dt_tau = 0.0;
  double t_end_tau = 0.0;
  std::vector<double> snapshot_taus;
  Integrator integrator = Integrator::rk4;
};

void validate(const SolverConfig& cfg);

struct QuadrantWeights {
  OutcomeWeights w;
  double residual = 0.0;  // mass outside the four corner regions
};

// Masses of the four sign-matched corner regions |m| > thr and |m'| > thr.
QuadrantWeights quadrant_weights(const JointField& field, double corner_threshold);

struct SnapshotDiagnostics {
  double t = 0.0;
  double t_tau = 0.0;
  QuadrantWeights quadrants;   // at threshold 0.9 m_F
  double center_mass = 0.0;    // mass with sqrt(m^2 + m'^2) < 0.5
  double cos_moment = 0.0;     // sum P cos(theta) over the central disk
  double sin_moment = 0.0;
};

struct Trajectory {
  std::vector<JointField> snapshots;
  std::vector<SnapshotDiagnostics> diagnostics;
  bool aborted = false;
  std::string abort_message;
  double dt = 0.0;           // absolute time step used
  double dt_tau = 0.0;
  double tau = 0.0;          // 1 / (gamma J4)
  double m_F = 0.0;
  double max_rate = 0.0;
  double renorm_accum = 0.0;  // accumulated |1 - sum P| before per-step renormalization
  double min_p_seen = 0.0;
  double max_cu_excess = 0.0;  // max over run of |Cu| - P before clamping
  std::uint64_t steps = 0;
};

Trajectory evolve(const JointField& initial, const ApparatusParams& a,
                  const ApparatusParams& ap, const SolverConfig& cfg);
Trajectory evolve(const BlochState& s, const ApparatusParams& a,
                  const ApparatusParams& ap, const SolverConfig& cfg);

// ---------------------------------------------------------------------------
// Outcome statistics
// ---------------------------------------------------------------------------

struct ResponseFit {
  double lambda = 0.0;
  double lambda_prime = 0.0;
  double residual_rms = 0.0;
  bool linearity_flag = false;  // set when residual_rms > 1e-3
  std::vector<QuadrantWeights> runs;
};

// Least-squares fit of p_ee' = 1/4 (1 + e lambda rz + e' lambda' rx) over
// evolve() runs for the given initial states (>= 3 linearly independent
// (rx, rz) pairs required).  Weights are read at cfg.t_end_tau with corner
// threshold 0.9 m_F.
ResponseFit response_fit(const ApparatusParams& a, const ApparatusParams& ap,
                         const SolverConfig& cfg, const std::vector<BlochState>& states);

struct RingStat {
  double r_lo = 0.0, r_hi = 0.0;
  double r_mean = 0.0;
  double mass = 0.0;
  double p_mean = 0.0;
  double cos_moment = 0.0;
  double sin_moment = 0.0;
  int count = 0;
};

struct AnisotropyReport {
  std::vector<RingStat> rings;          // over P
  double center_mass = 0.0;             // P mass with r < 0.5
  double cos_moment = 0.0, sin_moment = 0.0;  // over r < 0.5
  double down_slope = 0.0;              // d ln(ring mean of (P-Cu)/2) / dr
  bool down_slope_valid = false;
  double down_slope_r_lo = 0.0, down_slope_r_hi = 0.0;
};

// Ring-resolved angular moments of P, central mass, and the fitted radial
// log-slope of the down-branch component (P - Cu)/2 over r in
// [slope window] (defaults to [0.5, 6.5] grid spacings).
AnisotropyReport anisotropy_diagnostics(const JointField& field, double slope_r_lo = -1.0,
                                        double slope_r_hi = -1.0);

}  // namespace cwmeter
