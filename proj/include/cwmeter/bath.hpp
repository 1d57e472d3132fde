#pragma once

#include "cwmeter/types.hpp"

namespace cwmeter {

// Quasi-Ohmic bath kernel parameters.
struct KernelParams {
  double beta = 0.0;
  double Gamma = 0.0;
  double matsubara_tol = 1e-10;  // relative tail tolerance for the K' sum
};

void validate(const KernelParams& kp);

// K(w) = (1/4) w exp(-|w|/Gamma) / (exp(beta w) - 1), hbar = 1.
// Returns the analytic limit 1/(4 beta) exp(-|w|/Gamma) for |beta w| < 1e-8.
// Throws std::domain_error if |w| exceeds the Debye cutoff.
double noise_kernel(double omega, const KernelParams& kp);

// Matsubara-sum part of the Markovian K'(w):
//   -(1/(2 beta)) sum_{n>=1} exp(-Omega_n/Gamma) Omega_n / (w^2 + Omega_n^2),
// Omega_n = 2 pi n / beta.  The cutoff-linear constant term is omitted; only
// differences K'(a) - K'(b) enter the equations of motion.
double noise_kernel_prime(double omega, const KernelParams& kp);

// Transition-rate coefficients for one magnet axis at magnetization m and
// branch frequencies (omega_plus, omega_minus).
struct RateCoefficients {
  double alpha_plus = 0.0;
  double alpha_minus = 0.0;
  double beta_plus = 0.0;
  double beta_minus = 0.0;
  double kappa_plus = 0.0;
  double kappa_minus = 0.0;
};

RateCoefficients rate_coefficients(double m, double omega_plus, double omega_minus,
                                   const KernelParams& kp);

// Fokker-Planck drift and diffusion for one branch frequency omega_i:
//   v = gamma omega (1 - m coth(beta omega)),
//   w = gamma omega (coth(beta omega) - m).
struct DriftDiffusion {
  double v = 0.0;
  double w = 0.0;
};

DriftDiffusion drift_diffusion(double m, double omega, const ApparatusParams& a);

}  // namespace cwmeter
