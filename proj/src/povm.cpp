#include "cwmeter/povm.hpp"

#include <cmath>
#include <random>

#include "cwmeter/core.hpp"

namespace cwmeter {

namespace {

void final_frame(const ApparatusParams& a, const ApparatusParams& ap, double& ux_f,
                 double& uz_f) {
  const double az = static_cast<double>(a.N) * a.g;
  const double ax = static_cast<double>(ap.N) * ap.g;
  const double w = std::sqrt(az * az + ax * ax);
  if (w == 0.0)
    throw std::invalid_argument("povm: both couplings are zero, no measurement directions");
  ux_f = ax / w;
  uz_f = az / w;
}

}  // namespace

std::array<Effect, 4> povm_elements(const ApparatusParams& a, const ApparatusParams& ap) {
  validate(a);
  validate(ap);
  double ux_f, uz_f;
  final_frame(a, ap, ux_f, uz_f);
  std::array<Effect, 4> out;
  for (int k = 0; k < 4; ++k) {
    // (1/2) |up><up| = (1/4)(I + u . sigma)
    out[static_cast<std::size_t>(k)] =
        Effect{0.25, 0.25 * kOutcomeEpsPrime[k] * ux_f, 0.0, 0.25 * kOutcomeEps[k] * uz_f};
  }
  return out;
}

MeasurementModel measurement_model(const ApparatusParams& a, const ApparatusParams& ap,
                                   double lambda, double lambda_prime) {
  MeasurementModel model;
  model.effects = povm_elements(a, ap);
  final_frame(a, ap, model.ux_f, model.uz_f);
  if (model.uz_f <= 0.0 || model.ux_f <= 0.0)
    throw std::invalid_argument("measurement_model: a zero coupling leaves the matching "
                                "contraction undefined");
  model.alpha_z = lambda / model.uz_f;
  model.alpha_x = lambda_prime / model.ux_f;
  if (!(model.alpha_x >= 0.0 && model.alpha_x <= 1.0 && model.alpha_z >= 0.0 &&
        model.alpha_z <= 1.0))
    throw std::invalid_argument("measurement_model: contractions fall outside [0, 1]");
  return model;
}

BlochState lossy_channel(const BlochState& s, double alpha_x, double alpha_z) {
  validate(s);
  if (!(alpha_x >= 0.0 && alpha_x <= 1.0 && alpha_z >= 0.0 && alpha_z <= 1.0))
    throw std::invalid_argument("lossy_channel: contractions must lie in [0, 1]");
  return BlochState{alpha_x * s.rx, 0.0, alpha_z * s.rz};
}

OutcomeWeights outcome_probabilities(const BlochState& s, const MeasurementModel& model) {
  const BlochState c = lossy_channel(s, model.alpha_x, model.alpha_z);
  // Tr((c0 I + c.sigma)(e0 I + e.sigma)) = 2 (c0 e0 + c.e) with c0 = 1/2.
  auto prob = [&](const Effect& f) {
    return 2.0 * (0.5 * f.e0 + 0.5 * (c.rx * f.ex + c.ry * f.ey + c.rz * f.ez));
  };
  OutcomeWeights w{prob(model.effects[0]), prob(model.effects[1]), prob(model.effects[2]),
                   prob(model.effects[3])};
  for (double v : {w.pp, w.pm, w.mp, w.mm})
    if (v < -1e-12)
      throw std::invalid_argument("outcome_probabilities: negative probability, "
                                  "inconsistent model");
  return w;
}

OutcomeWeights outcome_probabilities_closed_form(const BlochState& s, double lambda,
                                                 double lambda_prime) {
  validate(s);
  OutcomeWeights w;
  w.pp = 0.25 * (1.0 + lambda * s.rz + lambda_prime * s.rx);
  w.pm = 0.25 * (1.0 + lambda * s.rz - lambda_prime * s.rx);
  w.mp = 0.25 * (1.0 - lambda * s.rz + lambda_prime * s.rx);
  w.mm = 0.25 * (1.0 - lambda * s.rz - lambda_prime * s.rx);
  return w;
}

BlochState post_measurement_state(const MeasurementModel& model, int eps, int eps_prime,
                                  const std::optional<BlochState>& pre) {
  if ((eps != 1 && eps != -1) || (eps_prime != 1 && eps_prime != -1))
    throw std::invalid_argument("post_measurement_state: outcome signs must be +-1");
  if (pre) {
    const OutcomeWeights w = outcome_probabilities(*pre, model);
    const double probs[4] = {w.pp, w.pm, w.mp, w.mm};
    for (int k = 0; k < 4; ++k)
      if (kOutcomeEps[k] == eps && kOutcomeEpsPrime[k] == eps_prime && !(probs[k] > 0.0))
        throw std::domain_error("post_measurement_state: zero-probability outcome has no "
                                "conditional state");
  }
  // Rank-1 effects project onto |up_ee'>, independent of the input state.
  return BlochState{eps_prime * model.ux_f, 0.0, eps * model.uz_f};
}

OutcomeCounts sample_outcomes(const OutcomeWeights& p, std::int64_t n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("sample_outcomes: n must be >= 0");
  validate_probabilities(p, 1e-9);
  const double c1 = std::max(p.pp, 0.0);
  const double c2 = c1 + std::max(p.pm, 0.0);
  const double c3 = c2 + std::max(p.mp, 0.0);
  std::mt19937_64 rng(seed);
  OutcomeCounts counts;
  for (std::int64_t k = 0; k < n; ++k) {
    // Explicit 53-bit uniform keeps the draw identical across standard
    // library implementations.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u < c1) ++counts.pp;
    else if (u < c2) ++counts.pm;
    else if (u < c3) ++counts.mp;
    else ++counts.mm;
  }
  return counts;
}

BlochEstimate estimate_bloch(const OutcomeCounts& counts, double lambda,
                             double lambda_prime) {
  const std::int64_t n = counts.total();
  if (n <= 0) throw std::invalid_argument("estimate_bloch: need at least one sample");
  if (!(lambda > 0.0) || !(lambda_prime > 0.0))
    throw std::invalid_argument("estimate_bloch: component with zero response is "
                                "unestimable");
  const double nn = static_cast<double>(n);
  BlochEstimate est;
  est.rz = (static_cast<double>(counts.pp + counts.pm) -
            static_cast<double>(counts.mp + counts.mm)) /
           (nn * lambda);
  est.rx = (static_cast<double>(counts.pp + counts.mp) -
            static_cast<double>(counts.pm + counts.mm)) /
           (nn * lambda_prime);
  // Binomial variance of the aggregated counts propagated through the
  // inversion: Var = (1 - (lambda r)^2) / (n lambda^2).
  const double vz = std::max(0.0, 1.0 - lambda * est.rz * lambda * est.rz);
  const double vx = std::max(0.0, 1.0 - lambda_prime * est.rx * lambda_prime * est.rx);
  est.se_rz = std::sqrt(vz / nn) / lambda;
  est.se_rx = std::sqrt(vx / nn) / lambda_prime;
  return est;
}

}  // namespace cwmeter
