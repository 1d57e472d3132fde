#include "cwmeter/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cwmeter/core.hpp"

namespace cwmeter {

namespace {

double spin_sign(Branch b) {
  switch (b) {
    case Branch::up: return 0.5;
    case Branch::down: return -0.5;
    default: throw std::invalid_argument("branch must be up or down");
  }
}

// Entropic part of F_eq per N/(2 beta); finite limit 0 at m = +-1.
double entropy_term(double m) {
  if (std::abs(m) == 1.0) return 0.0;
  return std::log((1.0 - m * m) / 4.0) + m * std::log((1.0 + m) / (1.0 - m));
}

double free_energy_eq_limit(double m, const ApparatusParams& a) {
  return -a.J2 * a.N * m * m / 2.0 - a.J4 * a.N * m * m * m * m / 4.0 +
         a.N / (2.0 * a.beta) * entropy_term(m);
}

// d F_eq / dm divided by N: -J2 m - J4 m^3 + (T/2) ln((1+m)/(1-m)).
double phi(double m, const ApparatusParams& a) {
  return -a.J2 * m - a.J4 * m * m * m +
         0.5 / a.beta * std::log((1.0 + m) / (1.0 - m));
}

double golden_minimize(const std::function<double(double)>& f, double lo, double hi) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && (b - a) > 1e-14; ++it) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

double free_energy_eq(double m, const ApparatusParams& a) {
  if (!(std::abs(m) < 1.0))
    throw std::domain_error("free_energy_eq: requires |m| < 1 (log divergence)");
  return free_energy_eq_limit(m, a);
}

double free_energy_single(double m, const ApparatusParams& a, Branch branch) {
  return -spin_sign(branch) * a.N * a.g * m + free_energy_eq(m, a);
}

double free_energy_joint(double m, double mp, const ApparatusParams& a,
                         const ApparatusParams& ap, Branch branch) {
  const FieldFrame f = field_frame(m, mp, a, ap);
  return -spin_sign(branch) * f.w + free_energy_eq(m, a) + free_energy_eq(mp, ap);
}

double ferromagnetic_magnetization(const ApparatusParams& a) {
  validate(a);
  // Coarse scan of F_eq on (0, 1), then golden-section refinement around the
  // best bracket.  F_eq is evaluated with its one-sided limit at m = 1.
  auto f = [&a](double m) { return free_energy_eq_limit(m, a); };
  const int n = 4096;
  int best = 0;
  double fbest = f(0.0);
  for (int k = 1; k <= n; ++k) {
    double m = static_cast<double>(k) / n;
    if (m >= 1.0) m = 1.0 - 1e-12;
    double v = f(m);
    if (v < fbest) { fbest = v; best = k; }
  }
  double lo = std::max(0.0, (best - 1.0) / n);
  double hi = std::min(1.0 - 1e-12, (best + 1.0) / n);
  return golden_minimize(f, lo, hi);
}

Landscape1D eval_landscape_1d(const ApparatusParams& a, Branch branch) {
  validate(a);
  MagnetGrid grid(a.N);
  std::vector<double> f(grid.size());
  const double s = branch == Branch::eq ? 0.0 : spin_sign(branch);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double m = grid.value(static_cast<int>(i));
    f[i] = -s * a.N * a.g * m + free_energy_eq_limit(m, a);
  }
  return Landscape1D{std::move(grid), std::move(f), branch, a.g};
}

Landscape2D eval_landscape_2d(const ApparatusParams& a, const ApparatusParams& ap,
                              Branch branch) {
  validate(a);
  validate(ap);
  const double s = spin_sign(branch);
  MagnetGrid grid(a.N);
  MagnetGrid grid_p(ap.N);
  std::vector<double> f(grid.size() * grid_p.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = grid.value(static_cast<int>(i));
    const double fe = free_energy_eq_limit(m, a);
    for (std::size_t j = 0; j < grid_p.size(); ++j) {
      const double mp = grid_p.value(static_cast<int>(j));
      const FieldFrame fr = field_frame(m, mp, a, ap);
      f[i * grid_p.size() + j] = -s * fr.w + fe + free_energy_eq_limit(mp, ap);
    }
  }
  return Landscape2D{std::move(grid), std::move(grid_p), std::move(f), branch};
}

std::vector<StationaryPoint> locate_minima(const Landscape2D& landscape) {
  const MagnetGrid& g = landscape.grid;
  const MagnetGrid& gp = landscape.grid_prime;
  const std::size_t rows = g.size(), cols = gp.size();
  const auto& f = landscape.f;
  auto at = [&](std::size_t i, std::size_t j) { return f[i * cols + j]; };

  // Interior points that are non-strict 4-neighborhood minima.
  std::vector<std::size_t> q;
  auto tie = [](double v) { return 1e-9 * (std::abs(v) + 1.0); };
  for (std::size_t i = 1; i + 1 < rows; ++i)
    for (std::size_t j = 1; j + 1 < cols; ++j) {
      const double v = at(i, j);
      const double eps = tie(v);
      if (v <= at(i - 1, j) + eps && v <= at(i + 1, j) + eps &&
          v <= at(i, j - 1) + eps && v <= at(i, j + 1) + eps)
        q.push_back(i * cols + j);
    }

  // Cluster adjacent qualifying points with tied values (plateaus on
  // symmetric grids produce 2- or 4-point plateaus around m = 0).
  std::vector<int> parent(q.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (std::size_t s1 = 0; s1 < q.size(); ++s1)
    for (std::size_t s2 = s1 + 1; s2 < q.size(); ++s2) {
      const std::size_t a1 = q[s1], a2 = q[s2];
      const std::size_t i1 = a1 / cols, j1 = a1 % cols, i2 = a2 / cols, j2 = a2 % cols;
      const bool adj = (i1 == i2 && (j1 + 1 == j2 || j2 + 1 == j1)) ||
                       (j1 == j2 && (i1 + 1 == i2 || i2 + 1 == i1));
      if (adj && std::abs(f[a1] - f[a2]) <= tie(f[a1]))
        parent[static_cast<std::size_t>(find(static_cast<int>(s1)))] = find(static_cast<int>(s2));
    }

  std::vector<StationaryPoint> out;
  for (std::size_t s1 = 0; s1 < q.size(); ++s1) {
    if (find(static_cast<int>(s1)) != static_cast<int>(s1)) continue;
    // Representative: centroid position, minimum value over the cluster.
    double msum = 0.0, mpsum = 0.0, fmin = std::numeric_limits<double>::infinity();
    int count = 0;
    for (std::size_t s2 = 0; s2 < q.size(); ++s2) {
      if (find(static_cast<int>(s2)) != static_cast<int>(s1)) continue;
      const std::size_t i = q[s2] / cols, j = q[s2] % cols;
      msum += g.value(static_cast<int>(i));
      mpsum += gp.value(static_cast<int>(j));
      fmin = std::min(fmin, f[q[s2]]);
      ++count;
    }
    StationaryPoint pt;
    pt.m = msum / count;
    pt.mp = mpsum / count;
    pt.f = fmin;
    pt.kind.push_back(std::abs(pt.m) >= 0.5 ? 'F' : 'P');
    pt.kind.push_back(std::abs(pt.mp) >= 0.5 ? 'F' : 'P');
    out.push_back(std::move(pt));
  }
  std::sort(out.begin(), out.end(), [](const StationaryPoint& x, const StationaryPoint& y) {
    return x.m != y.m ? x.m < y.m : x.mp < y.mp;
  });
  return out;
}

double barrier_scan_single(const ApparatusParams& a, double dg) {
  validate(a);
  if (!(dg > 0.0)) throw std::invalid_argument("barrier_scan_single: dg must be > 0");
  const double m_f = ferromagnetic_magnetization(a);
  MagnetGrid grid(a.N);
  std::vector<double> ms;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = grid.value(static_cast<int>(i));
    if (m > 0.0 && m < m_f) ms.push_back(m);
  }
  const double eps = 1e-9 * a.N;
  const double g_max = 4.0 * (a.J2 + a.J4 + a.temperature()) + 1.0;
  for (double g = dg; g <= g_max; g += dg) {
    bool no_barrier = true;
    for (std::size_t k = 0; k + 1 < ms.size(); ++k) {
      const double df = (-0.5 * a.N * g * ms[k + 1] + free_energy_eq_limit(ms[k + 1], a)) -
                        (-0.5 * a.N * g * ms[k] + free_energy_eq_limit(ms[k], a));
      if (df > eps) { no_barrier = false; break; }
    }
    if (no_barrier) return g;
  }
  throw NumericError("barrier_scan_single: no barrier-free coupling found below scan cap");
}

CriticalCouplingSingle critical_coupling_single(const ApparatusParams& a, double dg) {
  validate(a);
  if (a.J2 != 0.0)
    throw std::invalid_argument("critical_coupling_single: closed form requires J2 = 0");
  const double t = a.temperature();
  if (!(t < 0.75 * a.J4))
    throw std::domain_error("critical_coupling_single: unsupported regime, T >= 3 J4 / 4");
  CriticalCouplingSingle out;
  out.m_c = std::sqrt(0.5 * (1.0 - std::sqrt(1.0 - 4.0 * t / (3.0 * a.J4))));
  out.closed_form = 0.5 * t * std::log((1.0 + out.m_c) / (1.0 - out.m_c));
  out.m_F = ferromagnetic_magnetization(a);
  out.scanned = barrier_scan_single(a, dg);
  return out;
}

namespace {

// A(m): the m-derivative of F_up/N along the m' = slice line of the joint
// up-branch landscape, with couplings g = g' = c.
double joint_barrier_derivative(double m, double c, double slice,
                                const ApparatusParams& a, const ApparatusParams& ap) {
  const double az = a.N * c * m;
  const double ax = ap.N * c * slice;
  const double w = std::sqrt(az * az + ax * ax);
  return -(a.N * c * c * m / (2.0 * w) + a.J2 * m + a.J4 * m * m * m) +
         0.5 / a.beta * std::log((1.0 + m) / (1.0 - m));
}

double hd_scan(const ApparatusParams& a, const ApparatusParams& ap, double dg,
               double slice_a, double slice_b) {
  const double m_f = ferromagnetic_magnetization(a);
  const double m_fp = ferromagnetic_magnetization(ap);
  MagnetGrid grid(a.N);
  MagnetGrid grid_p(ap.N);
  std::vector<double> ms, mps;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = grid.value(static_cast<int>(i));
    if (m > 0.0 && m < m_f) ms.push_back(m);
  }
  for (std::size_t j = 0; j < grid_p.size(); ++j) {
    const double mp = grid_p.value(static_cast<int>(j));
    if (mp > 0.0 && mp < m_fp) mps.push_back(mp);
  }
  // Tolerance matched to the discrete forward-difference convention
  // (F-step of 1e-9 N over one grid spacing 2/N).
  const double eps_a = 1e-9 * a.N / 2.0;
  const double eps_b = 1e-9 * ap.N / 2.0;
  const double g_max =
      4.0 * std::max(a.temperature(), ap.temperature()) + a.J2 + ap.J2 + 1.0;
  for (double c = dg; c <= g_max; c += dg) {
    bool ok = true;
    for (double m : ms)
      if (joint_barrier_derivative(m, c, slice_a, a, ap) > eps_a) { ok = false; break; }
    if (ok)
      for (double mp : mps)
        if (joint_barrier_derivative(mp, c, slice_b, ap, a) > eps_b) { ok = false; break; }
    if (ok) return c;
  }
  throw NumericError("critical_coupling_joint: scan cap reached without success");
}

}  // namespace

CriticalCouplingJoint critical_coupling_joint(const ApparatusParams& a,
                                              const ApparatusParams& ap, double dg) {
  validate(a);
  validate(ap);
  if (!(dg > 0.0)) throw std::invalid_argument("critical_coupling_joint: dg must be > 0");
  CriticalCouplingJoint out;
  out.closed_form = 2.0 * std::max(a.temperature() - a.J2, ap.temperature() - ap.J2);
  out.scanned = hd_scan(a, ap, dg, 1.0, 1.0);
  out.scanned_at_mF =
      hd_scan(a, ap, dg, ferromagnetic_magnetization(ap), ferromagnetic_magnetization(a));
  return out;
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::none: return "none";
    case Regime::one: return "one";
    default: return "both";
  }
}

RegimeReport classify_regime(double g, double gp, const ApparatusParams& a,
                             const ApparatusParams& ap) {
  validate(a);
  validate(ap);
  if (!(g >= 0.0) || !(gp >= 0.0))
    throw std::invalid_argument("classify_regime: couplings must be >= 0");
  RegimeReport rep;
  if (a.J2 == 0.0 && a.temperature() < 0.75 * a.J4)
    rep.h_c = critical_coupling_single(a).closed_form;
  else
    rep.h_c = barrier_scan_single(a);
  rep.h_d = critical_coupling_joint(a, ap).closed_form;
  rep.unequal_couplings = g != gp;

  const double g_lo = std::min(g, gp);
  const double g_hi = std::max(g, gp);
  const double tol = 1e-12 + 1e-9 * std::max(rep.h_c, rep.h_d);
  rep.boundary = std::abs(g_hi - rep.h_c) <= tol || std::abs(g_lo - rep.h_d) <= tol;
  if (g_hi < rep.h_c)
    rep.regime = Regime::none;
  else if (g_lo >= rep.h_d)
    rep.regime = Regime::both;
  else
    rep.regime = Regime::one;

  ApparatusParams ag = a, apg = ap;
  ag.g = g;
  apg.g = gp;
  rep.minima = locate_minima(eval_landscape_2d(ag, apg, Branch::up));
  return rep;
}

}  // namespace cwmeter
