#pragma once

#include <optional>

#include "cwmeter/types.hpp"

namespace cwmeter {

enum class Branch { eq, up, down };

// F_eq(m) = -J2 N m^2/2 - J4 N m^4/4 + (N/2beta)(ln((1-m^2)/4) + m ln((1+m)/(1-m))).
// The constant -ln(2 pi N)/2 is dropped.  Requires |m| < 1.
double free_energy_eq(double m, const ApparatusParams& a);

// F_i(m) = -s_i N g m + F_eq(m), s_up = +1/2, s_down = -1/2.
double free_energy_single(double m, const ApparatusParams& a, Branch branch);

// F_i(m, m') = -s_i w(m, m') + F_eq(m) + F_eq'(m').
double free_energy_joint(double m, double mp, const ApparatusParams& a,
                         const ApparatusParams& ap, Branch branch);

// Location of the ferromagnetic minimum of F_eq on (0, 1).
double ferromagnetic_magnetization(const ApparatusParams& a);

struct Landscape1D {
  MagnetGrid grid;
  std::vector<double> f;  // endpoints carry the one-sided limit of F
  Branch branch;
  double g_eff;
};

struct Landscape2D {
  MagnetGrid grid;
  MagnetGrid grid_prime;
  std::vector<double> f;  // row-major, endpoints via one-sided limits
  Branch branch;
};

Landscape1D eval_landscape_1d(const ApparatusParams& a, Branch branch);
Landscape2D eval_landscape_2d(const ApparatusParams& a, const ApparatusParams& ap,
                              Branch branch);

// Grid-local minimum of a 2D landscape.  Plateaus of tied neighbors are
// clustered into a single stationary point.  kind holds a two-letter code,
// P (paramagnetic, |m| < 0.5) or F (ferromagnetic) per axis.
struct StationaryPoint {
  double m = 0.0;
  double mp = 0.0;
  double f = 0.0;
  std::string kind;
};

std::vector<StationaryPoint> locate_minima(const Landscape2D& landscape);

// Single-apparatus critical coupling (barrier disappearance of F_up).
// closed_form is the printed expression h_c = (T/2) ln((1+m_c)/(1-m_c));
// scanned is the discrete-grid barrier scan (smallest g with the forward
// differences of F_up non-increasing on (0, m_F)).
struct CriticalCouplingSingle {
  double closed_form = 0.0;
  double scanned = 0.0;
  double m_c = 0.0;
  double m_F = 0.0;
};

// Requires J2 = 0 and T < 3 J4 / 4; scan step dg.
CriticalCouplingSingle critical_coupling_single(const ApparatusParams& a,
                                                double dg = 1e-3);

// Barrier scan usable for any J2 (no closed form needed).
double barrier_scan_single(const ApparatusParams& a, double dg = 1e-3);

// Joint critical coupling for equal couplings g = g'.
// closed_form = 2 max(T - J2, T' - J2'); scanned uses the barrier conditions
// A(m) <= 0 at the m' = 1 slice (and the analogous B); scanned_at_mF repeats
// the scan with the slice taken at m' = m_F as a sensitivity check.
struct CriticalCouplingJoint {
  double closed_form = 0.0;
  double scanned = 0.0;
  double scanned_at_mF = 0.0;
};

CriticalCouplingJoint critical_coupling_joint(const ApparatusParams& a,
                                              const ApparatusParams& ap,
                                              double dg = 1e-3);

enum class Regime { none, one, both };

struct RegimeReport {
  double h_c = 0.0;
  double h_d = 0.0;
  Regime regime = Regime::none;
  bool boundary = false;            // g within tolerance of a threshold
  bool unequal_couplings = false;   // classified conservatively via min/max
  std::vector<StationaryPoint> minima;  // up-branch minima at these couplings
};

// Classification of the couplings (g, gp) against h_c and h_d.
RegimeReport classify_regime(double g, double gp, const ApparatusParams& a,
                             const ApparatusParams& ap);

const char* to_string(Regime r);

}  // namespace cwmeter
