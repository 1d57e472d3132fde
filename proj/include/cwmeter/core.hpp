#pragma once

#include "cwmeter/types.hpp"

namespace cwmeter {

// ln G(m) from exact log-factorials; m must lie on the grid of N.
double degeneracy_log(int N, double m);

// Stirling form of ln G(m), kept as a documented approximation check.
// Requires |m| < 1.
double degeneracy_log_stirling(int N, double m);

// Initial paramagnetic distribution P0(m) = G(m) / 2^N, exactly binomial,
// normalized to sum 1.
std::vector<double> initial_magnet_dist(const MagnetGrid& grid);

// Gaussian large-N approximation sqrt(N/2pi) exp(-N m^2 / 2).  This is a
// density in m; multiply by the grid spacing 2/N to compare with P0.
std::vector<double> gaussian_magnet_dist(const MagnetGrid& grid);

// Local frame at (m, m'): w = sqrt((N g m)^2 + (N' g' m')^2),
// u = (N g m z + N' g' m' x) / w.  Returns w = 0, (ux, uz) = (0, 1) at the
// degenerate point.
FieldFrame field_frame(double m, double mp, const ApparatusParams& a,
                       const ApparatusParams& ap);

// P = P0(m) P0'(m'), Cu = (uz rz + ux rx) P, at t = 0.
JointField init_joint_field(const BlochState& s, const ApparatusParams& a,
                            const ApparatusParams& ap);

}  // namespace cwmeter
