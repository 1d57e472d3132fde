#include "cwmeter/bath.hpp"

#include <cmath>

namespace cwmeter {

void validate(const KernelParams& kp) {
  if (!(kp.beta > 0.0)) throw std::invalid_argument("KernelParams: beta must be > 0");
  if (!(kp.Gamma > 0.0)) throw std::invalid_argument("KernelParams: Gamma must be > 0");
  if (!(kp.matsubara_tol > 0.0) || kp.matsubara_tol > 1e-6)
    throw std::invalid_argument("KernelParams: matsubara_tol must lie in (0, 1e-6]");
}

double noise_kernel(double omega, const KernelParams& kp) {
  if (!std::isfinite(omega)) throw std::invalid_argument("noise_kernel: omega not finite");
  if (std::abs(omega) > kp.Gamma)
    throw std::domain_error("noise_kernel: |omega| exceeds the Debye cutoff Gamma");
  const double cut = std::exp(-std::abs(omega) / kp.Gamma);
  const double x = kp.beta * omega;
  if (std::abs(x) < 1e-8) return 0.25 / kp.beta * cut;
  return 0.25 * omega * cut / std::expm1(x);
}

double noise_kernel_prime(double omega, const KernelParams& kp) {
  if (!std::isfinite(omega))
    throw std::invalid_argument("noise_kernel_prime: omega not finite");
  const double w2 = omega * omega;
  const double tol = kp.matsubara_tol;
  double sum = 0.0;
  for (long long n = 1;; ++n) {
    const double wn = 2.0 * M_PI * n / kp.beta;
    const double en = std::exp(-wn / kp.Gamma);
    sum += en * wn / (w2 + wn * wn);
    // Tail bound: remaining terms < integral bound Gamma/(2 pi n) * exp(-Omega_n/Gamma).
    if (en < tol && kp.Gamma / (2.0 * M_PI * n) * en < tol * sum) break;
    if (n > 200'000'000)
      throw NumericError("noise_kernel_prime: Matsubara sum failed to converge");
  }
  return -0.5 / kp.beta * sum;
}

RateCoefficients rate_coefficients(double m, double omega_plus, double omega_minus,
                                   const KernelParams& kp) {
  if (!(std::abs(m) <= 1.0))
    throw std::invalid_argument("rate_coefficients: |m| must be <= 1");
  const double kpp = noise_kernel(2.0 * omega_plus, kp);
  const double kpm = noise_kernel(2.0 * omega_minus, kp);
  const double kmp = noise_kernel(-2.0 * omega_plus, kp);
  const double kmm = noise_kernel(-2.0 * omega_minus, kp);
  const double qpp = noise_kernel_prime(2.0 * omega_plus, kp);
  const double qpm = noise_kernel_prime(2.0 * omega_minus, kp);
  const double qmp = noise_kernel_prime(-2.0 * omega_plus, kp);
  const double qmm = noise_kernel_prime(-2.0 * omega_minus, kp);
  RateCoefficients rc;
  rc.alpha_plus = (1.0 + m) * (kpp + kpm);
  rc.alpha_minus = (1.0 - m) * (kmp + kmm);
  rc.beta_plus = (1.0 + m) * (kpp - kpm);
  rc.beta_minus = (1.0 - m) * (kmp - kmm);
  rc.kappa_plus = (1.0 + m) * (qpm - qpp);
  rc.kappa_minus = (1.0 - m) * (qmm - qmp);
  return rc;
}

DriftDiffusion drift_diffusion(double m, double omega, const ApparatusParams& a) {
  if (!(std::abs(m) <= 1.0))
    throw std::invalid_argument("drift_diffusion: |m| must be <= 1");
  const double x = a.beta * omega;
  double t;  // omega * coth(beta * omega), even in omega, finite at 0
  if (std::abs(x) < 1e-8)
    t = (1.0 + x * x / 3.0) / a.beta;
  else
    t = omega / std::tanh(x);
  return DriftDiffusion{a.gamma * (omega - m * t), a.gamma * (t - m * omega)};
}

}  // namespace cwmeter
