#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "cwmeter/types.hpp"

namespace cwmeter {

// 2x2 Hermitian operator in the Pauli basis: e0 I + ex sx + ey sy + ez sz
// (sx, sy, sz the Pauli matrices).  Positive semidefinite iff |e| <= e0.
struct Effect {
  double e0 = 0.0;
  double ex = 0.0;
  double ey = 0.0;
  double ez = 0.0;

  double pauli_norm() const { return std::sqrt(ex * ex + ey * ey + ez * ez); }
  bool positive_semidefinite(double tol = 1e-12) const {
    return e0 >= -tol && pauli_norm() <= e0 + tol;
  }
};

// Outcome index order everywhere: (++, +-, -+, --), first sign = z apparatus.
inline constexpr int kOutcomeEps[4] = {+1, +1, -1, -1};
inline constexpr int kOutcomeEpsPrime[4] = {+1, -1, +1, -1};

// The four rank-1 effects (1/2)|up_ee'><up_ee'| along the directions
// (e' N'g', 0, e N g)/sqrt((Ng)^2 + (N'g')^2).  Requires at least one
// nonzero coupling.
std::array<Effect, 4> povm_elements(const ApparatusParams& a, const ApparatusParams& ap);

struct MeasurementModel {
  std::array<Effect, 4> effects;
  double ux_f = 0.0;  // final-frame direction cosines of the (+,+) outcome
  double uz_f = 0.0;
  double alpha_x = 0.0;  // channel contractions
  double alpha_z = 0.0;

  double lambda() const { return alpha_z * uz_f; }
  double lambda_prime() const { return alpha_x * ux_f; }
};

// Builds the model from the dynamics response (lambda, lambda') via
// alpha_z = lambda / uz_f, alpha_x = lambda' / ux_f.
MeasurementModel measurement_model(const ApparatusParams& a, const ApparatusParams& ap,
                                   double lambda, double lambda_prime);

// (rx, ry, rz) -> (alpha_x rx, 0, alpha_z rz); contractions must be in [0, 1].
BlochState lossy_channel(const BlochState& s, double alpha_x, double alpha_z);

// Outcome probabilities via the trace formula p = Tr(C(rho) F_ee').
OutcomeWeights outcome_probabilities(const BlochState& s, const MeasurementModel& model);

// Closed form p_ee' = 1/4 (1 + e lambda rz + e' lambda' rx).
OutcomeWeights outcome_probabilities_closed_form(const BlochState& s, double lambda,
                                                 double lambda_prime);

// Post-measurement state for an outcome: the pure state along u^(ee').
// When the pre-measurement state is supplied, a zero-probability outcome is
// rejected (undefined conditional state).
BlochState post_measurement_state(const MeasurementModel& model, int eps, int eps_prime,
                                  const std::optional<BlochState>& pre = std::nullopt);

struct OutcomeCounts {
  std::int64_t pp = 0, pm = 0, mp = 0, mm = 0;
  std::int64_t total() const { return pp + pm + mp + mm; }
};

// Deterministic multinomial draw (fixed seed -> fixed counts).
OutcomeCounts sample_outcomes(const OutcomeWeights& p, std::int64_t n, std::uint64_t seed);

struct BlochEstimate {
  double rx = 0.0;
  double rz = 0.0;
  double se_rx = 0.0;
  double se_rz = 0.0;
};

// Linear inversion: rz = [(n_pp+n_pm)-(n_mp+n_mm)]/(n lambda) and the x
// analogue, with binomial standard errors.  lambda, lambda' must be > 0.
BlochEstimate estimate_bloch(const OutcomeCounts& counts, double lambda,
                             double lambda_prime);

}  // namespace cwmeter
