#include "cwmeter/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cwmeter/core.hpp"
#include "cwmeter/landscape.hpp"

namespace cwmeter {

namespace {

// Bath-channel normalization of the dissipator prefactor: the sigma_x and
// sigma_y phonon couplings of every magnet spin each contribute a
// raising/lowering operator pair, so the per-magnet prefactor is
// kDissipatorChannels * (gamma N / 2).  This normalization sets the
// registration timescale to ~10 tau with tau = 1/(gamma J4).
constexpr double kDissipatorChannels = 4.0;

// Mirror-symmetric total: pairs k and K-1-k are added first, so the sum of a
// jointly-reflected field is bit-identical to the sum of the original.
double symmetric_sum(std::span<const double> v) {
  const std::size_t n = v.size();
  double acc = 0.0;
  for (std::size_t k = 0; k < n / 2; ++k) acc += v[k] + v[n - 1 - k];
  if (n % 2 == 1) acc += v[n / 2];
  return acc;
}

struct FrameTable {
  std::vector<double> w, ux, uz;
};

FrameTable build_frames(const MagnetGrid& g, const MagnetGrid& gp,
                        const ApparatusParams& a, const ApparatusParams& ap) {
  FrameTable t;
  const std::size_t ni = g.size(), nj = gp.size();
  t.w.resize(ni * nj);
  t.ux.resize(ni * nj);
  t.uz.resize(ni * nj);
  for (std::size_t i = 0; i < ni; ++i) {
    const double m = g.value(static_cast<int>(i));
    for (std::size_t j = 0; j < nj; ++j) {
      const double mp = gp.value(static_cast<int>(j));
      const FieldFrame f = field_frame(m, mp, a, ap);
      t.w[i * nj + j] = f.w;
      t.ux[i * nj + j] = f.ux;
      t.uz[i * nj + j] = f.uz;
    }
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dephasing
// ---------------------------------------------------------------------------

double dephasing_time(const ApparatusParams& a) {
  if (!(a.g > 0.0)) throw std::invalid_argument("dephasing_time: requires g > 0");
  return 1.0 / (std::sqrt(2.0 * a.N) * a.g);
}

BlochState dephasing_single(double t, const BlochState& s, const ApparatusParams& a) {
  validate(s);
  validate(a);
  if (!(t >= 0.0)) throw std::invalid_argument("dephasing_single: t must be >= 0");
  const double tau_d = dephasing_time(a);
  const double decay = std::exp(-(t / tau_d) * (t / tau_d));
  return BlochState{s.rx * decay, s.ry * decay, s.rz};
}

BlochState dephasing_joint_numeric(double t, const BlochState& s,
                                   const ApparatusParams& a, const ApparatusParams& ap) {
  validate(s);
  validate(a);
  validate(ap);
  if (!(t >= 0.0)) throw std::invalid_argument("dephasing_joint_numeric: t must be >= 0");
  MagnetGrid grid(a.N), grid_p(ap.N);
  const std::vector<double> p0 = initial_magnet_dist(grid);
  const std::vector<double> p0p = initial_magnet_dist(grid_p);
  double rx = 0.0, ry = 0.0, rz = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = grid.value(static_cast<int>(i));
    for (std::size_t j = 0; j < grid_p.size(); ++j) {
      const double mp = grid_p.value(static_cast<int>(j));
      const FieldFrame f = field_frame(m, mp, a, ap);
      const double weight = p0[i] * p0p[j];
      const double cu = f.ux * s.rx + f.uz * s.rz;
      const double cv0 = f.uz * s.rx - f.ux * s.rz;
      const double cy0 = s.ry;
      const double c = std::cos(f.w * t), sn = std::sin(f.w * t);
      const double cv = cv0 * c - cy0 * sn;
      const double cy = cy0 * c + cv0 * sn;
      rx += weight * (cu * f.ux + cv * f.uz);
      ry += weight * cy;
      rz += weight * (cu * f.uz - cv * f.ux);
    }
  }
  return BlochState{rx, ry, rz};
}

BlochState dephasing_joint_asymptote(const BlochState& s, const ApparatusParams& a,
                                     const ApparatusParams& ap) {
  validate(s);
  validate(a);
  validate(ap);
  const double sa = std::sqrt(static_cast<double>(a.N)) * a.g;
  const double sb = std::sqrt(static_cast<double>(ap.N)) * ap.g;
  if (sa + sb <= 0.0)
    throw std::invalid_argument("dephasing_joint_asymptote: both couplings are zero");
  return BlochState{s.rx * sb / (sa + sb), 0.0, s.rz * sa / (sa + sb)};
}

// ---------------------------------------------------------------------------
// RegistrationOperator
// ---------------------------------------------------------------------------

RegistrationOperator::RegistrationOperator(const ApparatusParams& a,
                                           const ApparatusParams& ap)
    : grid_(a.N), grid_prime_(ap.N) {
  validate(a);
  validate(ap);
  if (!(a.J4 > 0.0))
    throw std::invalid_argument("RegistrationOperator: J4 must be > 0 (tau = 1/(gamma J4))");
  ni_ = grid_.size();
  nj_ = grid_prime_.size();
  tau_ = 1.0 / (a.gamma * a.J4);
  const std::size_t n = ni_ * nj_;
  ap_.resize(n); am_.resize(n); bp_.resize(n); bm_.resize(n);
  app_.resize(n); amp_.resize(n); bpp_.resize(n); bmp_.resize(n);
  cpx_.assign(n, 0.0); cmx_.assign(n, 0.0); cpy_.assign(n, 0.0); cmy_.assign(n, 0.0);

  const KernelParams kp{a.beta, a.Gamma, 1e-10};
  const KernelParams kpp{ap.beta, ap.Gamma, 1e-10};
  const FrameTable fr = build_frames(grid_, grid_prime_, a, ap);
  const double c_a = kDissipatorChannels * a.gamma * a.N / 2.0;
  const double c_b = kDissipatorChannels * ap.gamma * ap.N / 2.0;

  for (std::size_t i = 0; i < ni_; ++i) {
    const double m = grid_.value(static_cast<int>(i));
    const double m3 = (m * m) * m;
    const double jpart = a.J2 * m + a.J4 * m3;
    for (std::size_t j = 0; j < nj_; ++j) {
      const std::size_t k = i * nj_ + j;
      const double mp = grid_prime_.value(static_cast<int>(j));
      const double mp3 = (mp * mp) * mp;
      const double jpart_p = ap.J2 * mp + ap.J4 * mp3;
      const double guz = a.g * fr.uz[k];
      const double gux = ap.g * fr.ux[k];
      const double wp = jpart + guz;
      const double wm = jpart - guz;
      const double wpp = jpart_p + gux;
      const double wmp = jpart_p - gux;
      const double kp1 = noise_kernel(2.0 * wp, kp);
      const double kp2 = noise_kernel(2.0 * wm, kp);
      const double km1 = noise_kernel(-2.0 * wp, kp);
      const double km2 = noise_kernel(-2.0 * wm, kp);
      const double qp1 = noise_kernel(2.0 * wpp, kpp);
      const double qp2 = noise_kernel(2.0 * wmp, kpp);
      const double qm1 = noise_kernel(-2.0 * wpp, kpp);
      const double qm2 = noise_kernel(-2.0 * wmp, kpp);
      ap_[k] = c_a * (1.0 + m) * (kp1 + kp2);
      am_[k] = c_a * (1.0 - m) * (km1 + km2);
      bp_[k] = c_a * (1.0 + m) * (kp1 - kp2);
      bm_[k] = c_a * (1.0 - m) * (km1 - km2);
      app_[k] = c_b * (1.0 + mp) * (qp1 + qp2);
      amp_[k] = c_b * (1.0 - mp) * (qm1 + qm2);
      bpp_[k] = c_b * (1.0 + mp) * (qp1 - qp2);
      bmp_[k] = c_b * (1.0 - mp) * (qm1 - qm2);
    }
  }
  // u.u products with the shifted neighbor; zero at the open boundary, where
  // the shifted field itself is zero.
  for (std::size_t i = 0; i < ni_; ++i)
    for (std::size_t j = 0; j < nj_; ++j) {
      const std::size_t k = i * nj_ + j;
      if (i + 1 < ni_)
        cpx_[k] = fr.ux[k] * fr.ux[k + nj_] + fr.uz[k] * fr.uz[k + nj_];
      if (i > 0)
        cmx_[k] = fr.ux[k] * fr.ux[k - nj_] + fr.uz[k] * fr.uz[k - nj_];
      if (j + 1 < nj_)
        cpy_[k] = fr.ux[k] * fr.ux[k + 1] + fr.uz[k] * fr.uz[k + 1];
      if (j > 0)
        cmy_[k] = fr.ux[k] * fr.ux[k - 1] + fr.uz[k] * fr.uz[k - 1];
    }
  for (std::size_t k = 0; k < n; ++k)
    max_rate_ = std::max(max_rate_, ap_[k] + am_[k] + app_[k] + amp_[k]);
}

RegistrationOperator::Workspace RegistrationOperator::make_workspace() const {
  Workspace ws;
  const std::size_t n = ni_ * nj_;
  for (auto* v : {&ws.gp, &ws.gm, &ws.hp, &ws.hm, &ws.big_gp, &ws.big_gm, &ws.big_hp,
                  &ws.big_hm})
    v->assign(n, 0.0);
  return ws;
}

void RegistrationOperator::rhs(std::span<const double> p, std::span<const double> cu,
                               std::span<double> dp, std::span<double> dcu,
                               Workspace& ws) const {
  const std::size_t n = ni_ * nj_;
  for (std::size_t k = 0; k < n; ++k) {
    ws.gp[k] = ap_[k] * p[k] + bp_[k] * cu[k];
    ws.gm[k] = am_[k] * p[k] + bm_[k] * cu[k];
    ws.hp[k] = app_[k] * p[k] + bpp_[k] * cu[k];
    ws.hm[k] = amp_[k] * p[k] + bmp_[k] * cu[k];
    ws.big_gp[k] = ap_[k] * cu[k] + bp_[k] * p[k];
    ws.big_gm[k] = am_[k] * cu[k] + bm_[k] * p[k];
    ws.big_hp[k] = app_[k] * cu[k] + bpp_[k] * p[k];
    ws.big_hm[k] = amp_[k] * cu[k] + bmp_[k] * p[k];
  }
  // Term grouping (up, down) + (primed up, primed down) keeps the evaluation
  // bit-exactly equivariant under the joint reflection.
  for (std::size_t i = 0; i < ni_; ++i) {
    for (std::size_t j = 0; j < nj_; ++j) {
      const std::size_t k = i * nj_ + j;
      const double gpu = (i + 1 < ni_) ? ws.gp[k + nj_] : 0.0;
      const double gmd = (i > 0) ? ws.gm[k - nj_] : 0.0;
      const double hpu = (j + 1 < nj_) ? ws.hp[k + 1] : 0.0;
      const double hmd = (j > 0) ? ws.hm[k - 1] : 0.0;
      dp[k] = ((gpu - ws.gp[k]) + (gmd - ws.gm[k])) +
              ((hpu - ws.hp[k]) + (hmd - ws.hm[k]));
      const double ggu = (i + 1 < ni_) ? cpx_[k] * ws.big_gp[k + nj_] : 0.0;
      const double ggd = (i > 0) ? cmx_[k] * ws.big_gm[k - nj_] : 0.0;
      const double hhu = (j + 1 < nj_) ? cpy_[k] * ws.big_hp[k + 1] : 0.0;
      const double hhd = (j > 0) ? cmy_[k] * ws.big_hm[k - 1] : 0.0;
      dcu[k] = ((ggu - ws.big_gp[k]) + (ggd - ws.big_gm[k])) +
               ((hhu - ws.big_hp[k]) + (hhd - ws.big_hm[k]));
    }
  }
}

std::pair<std::vector<double>, std::vector<double>> registration_rhs(
    const JointField& field, const ApparatusParams& a, const ApparatusParams& ap) {
  RegistrationOperator op(a, ap);
  if (field.rows() != op.rows() || field.cols() != op.cols())
    throw std::invalid_argument("registration_rhs: field grids do not match the apparatuses");
  auto ws = op.make_workspace();
  std::vector<double> dp(field.p().size()), dcu(field.cu().size());
  op.rhs(field.p(), field.cu(), dp, dcu, ws);
  return {std::move(dp), std::move(dcu)};
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

void validate(const SolverConfig& cfg) {
  if (!(cfg.t_end_tau > 0.0)) throw std::invalid_argument("SolverConfig: t_end_tau must be > 0");
  if (cfg.dt_tau < 0.0) throw std::invalid_argument("SolverConfig: dt_tau must be >= 0");
  for (double s : cfg.snapshot_taus)
    if (s < 0.0 || s > cfg.t_end_tau + 1e-12)
      throw std::invalid_argument("SolverConfig: snapshot times must lie in [0, t_end]");
}

QuadrantWeights quadrant_weights(const JointField& field, double corner_threshold) {
  if (!(corner_threshold > 0.0) || !(corner_threshold < 1.0))
    throw std::invalid_argument("quadrant_weights: threshold must lie in (0, 1)");
  QuadrantWeights out;
  const auto& g = field.grid();
  const auto& gp = field.grid_prime();
  for (std::size_t i = 0; i < field.rows(); ++i) {
    const double m = g.value(static_cast<int>(i));
    if (std::abs(m) <= corner_threshold) continue;
    for (std::size_t j = 0; j < field.cols(); ++j) {
      const double mp = gp.value(static_cast<int>(j));
      if (std::abs(mp) <= corner_threshold) continue;
      const double v = field.p_at(i, j);
      if (m > 0.0 && mp > 0.0) out.w.pp += v;
      else if (m > 0.0) out.w.pm += v;
      else if (mp > 0.0) out.w.mp += v;
      else out.w.mm += v;
    }
  }
  out.residual = 1.0 - out.w.sum();
  return out;
}

namespace {

SnapshotDiagnostics make_diagnostics(const JointField& f, double tau, double thr) {
  SnapshotDiagnostics d;
  d.t = f.t();
  d.t_tau = f.t() / tau;
  d.quadrants = quadrant_weights(f, thr);
  const auto& g = f.grid();
  const auto& gp = f.grid_prime();
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const double m = g.value(static_cast<int>(i));
    for (std::size_t j = 0; j < f.cols(); ++j) {
      const double mp = gp.value(static_cast<int>(j));
      const double r = std::sqrt(m * m + mp * mp);
      if (r >= 0.5) continue;
      const double v = f.p_at(i, j);
      d.center_mass += v;
      if (r > 0.0) {
        d.cos_moment += v * (m / r);
        d.sin_moment += v * (mp / r);
      }
    }
  }
  return d;
}

class Stepper {
 public:
  Stepper(const RegistrationOperator& op, Integrator integrator)
      : op_(op), integ_(integrator), ws_(op.make_workspace()) {
    const std::size_t n = op.rows() * op.cols();
    for (auto* v : {&k1p_, &k1c_, &k2p_, &k2c_, &k3p_, &k3c_, &k4p_, &k4c_, &tp_, &tc_})
      v->assign(n, 0.0);
  }

  void step(std::vector<double>& p, std::vector<double>& c, double dt) {
    const std::size_t n = p.size();
    op_.rhs(p, c, k1p_, k1c_, ws_);
    if (integ_ == Integrator::euler) {
      for (std::size_t k = 0; k < n; ++k) {
        p[k] += dt * k1p_[k];
        c[k] += dt * k1c_[k];
      }
      return;
    }
    const double h = 0.5 * dt;
    for (std::size_t k = 0; k < n; ++k) { tp_[k] = p[k] + h * k1p_[k]; tc_[k] = c[k] + h * k1c_[k]; }
    op_.rhs(tp_, tc_, k2p_, k2c_, ws_);
    for (std::size_t k = 0; k < n; ++k) { tp_[k] = p[k] + h * k2p_[k]; tc_[k] = c[k] + h * k2c_[k]; }
    op_.rhs(tp_, tc_, k3p_, k3c_, ws_);
    for (std::size_t k = 0; k < n; ++k) { tp_[k] = p[k] + dt * k3p_[k]; tc_[k] = c[k] + dt * k3c_[k]; }
    op_.rhs(tp_, tc_, k4p_, k4c_, ws_);
    const double w6 = dt / 6.0;
    for (std::size_t k = 0; k < n; ++k) {
      p[k] += w6 * (k1p_[k] + 2.0 * k2p_[k] + 2.0 * k3p_[k] + k4p_[k]);
      c[k] += w6 * (k1c_[k] + 2.0 * k2c_[k] + 2.0 * k3c_[k] + k4c_[k]);
    }
  }

 private:
  const RegistrationOperator& op_;
  Integrator integ_;
  RegistrationOperator::Workspace ws_;
  std::vector<double> k1p_, k1c_, k2p_, k2c_, k3p_, k3c_, k4p_, k4c_, tp_, tc_;
};

}  // namespace

Trajectory evolve(const JointField& initial, const ApparatusParams& a,
                  const ApparatusParams& ap, const SolverConfig& cfg) {
  validate(cfg);
  RegistrationOperator op(a, ap);
  if (initial.rows() != op.rows() || initial.cols() != op.cols())
    throw std::invalid_argument("evolve: field grids do not match the apparatuses");

  Trajectory tr;
  tr.tau = op.tau();
  tr.max_rate = op.max_outflow_rate();
  tr.m_F = std::min(ferromagnetic_magnetization(a), ferromagnetic_magnetization(ap));
  const double thr = 0.9 * tr.m_F;

  double dt = cfg.dt_tau > 0.0 ? cfg.dt_tau * tr.tau : 0.01 / tr.max_rate;
  if (!(dt * tr.max_rate < 0.5))
    throw ConfigError("evolve: stability precheck failed, dt * max_rate must be < 0.5");
  const double t_end = cfg.t_end_tau * tr.tau;
  const auto nsteps = static_cast<std::uint64_t>(std::ceil(t_end / dt - 1e-9));
  dt = t_end / static_cast<double>(nsteps);
  tr.dt = dt;
  tr.dt_tau = dt / tr.tau;
  tr.steps = nsteps;

  std::set<std::uint64_t> snap_steps;
  for (double s : cfg.snapshot_taus) {
    auto k = static_cast<std::uint64_t>(std::llround(s * tr.tau / dt));
    snap_steps.insert(std::min(k, nsteps));
  }

  std::vector<double> p = initial.p();
  std::vector<double> c = initial.cu();
  Stepper stepper(op, cfg.integrator);

  auto record = [&](std::uint64_t step) {
    JointField f(op.grid(), op.grid_prime(), p, c, step * dt);
    tr.diagnostics.push_back(make_diagnostics(f, tr.tau, thr));
    tr.snapshots.push_back(std::move(f));
  };
  if (snap_steps.count(0)) record(0);

  for (std::uint64_t s = 1; s <= nsteps; ++s) {
    stepper.step(p, c, dt);
    // Clip negatives, renormalize, keep |Cu| <= P; all decisions and sums are
    // mirror-symmetric so reflection equivariance stays exact.
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] < 0.0) {
        tr.min_p_seen = std::min(tr.min_p_seen, p[k]);
        p[k] = 0.0;
      }
      const double excess = std::abs(c[k]) - p[k];
      if (excess > 0.0) {
        tr.max_cu_excess = std::max(tr.max_cu_excess, excess);
        c[k] = std::copysign(p[k], c[k]);
      }
    }
    const double sum = symmetric_sum(p);
    const double drift = std::abs(sum - 1.0);
    tr.renorm_accum += drift;
    if (drift > 1e-6) {
      tr.aborted = true;
      tr.abort_message = "normalization drift " + std::to_string(drift) + " at step " +
                         std::to_string(s) + " exceeds 1e-6";
      record(s);
      return tr;
    }
    const double inv = 1.0 / sum;
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= inv;
      c[k] *= inv;
    }
    if (snap_steps.count(s)) record(s);
  }
  return tr;
}

Trajectory evolve(const BlochState& s, const ApparatusParams& a,
                  const ApparatusParams& ap, const SolverConfig& cfg) {
  return evolve(init_joint_field(s, a, ap), a, ap, cfg);
}

// ---------------------------------------------------------------------------
// Outcome statistics
// ---------------------------------------------------------------------------

ResponseFit response_fit(const ApparatusParams& a, const ApparatusParams& ap,
                         const SolverConfig& cfg, const std::vector<BlochState>& states) {
  if (states.size() < 3)
    throw std::invalid_argument("response_fit: need at least 3 initial states");
  SolverConfig run_cfg = cfg;
  run_cfg.snapshot_taus = {cfg.t_end_tau};

  ResponseFit fit;
  const double thr_mf = 0.9 * std::min(ferromagnetic_magnetization(a),
                                       ferromagnetic_magnetization(ap));
  double a00 = 0.0, a01 = 0.0, a11 = 0.0, b0 = 0.0, b1 = 0.0;
  std::vector<double> xs1, xs2, ys;
  for (const BlochState& s : states) {
    Trajectory tr = evolve(s, a, ap, run_cfg);
    if (tr.aborted) throw NumericError("response_fit: run aborted: " + tr.abort_message);
    const QuadrantWeights q = quadrant_weights(tr.snapshots.back(), thr_mf);
    fit.runs.push_back(q);
    const double probs[4] = {q.w.pp, q.w.pm, q.w.mp, q.w.mm};
    const int eps[4] = {+1, +1, -1, -1};
    const int epsp[4] = {+1, -1, +1, -1};
    for (int k = 0; k < 4; ++k) {
      const double x1 = 0.25 * eps[k] * s.rz;
      const double x2 = 0.25 * epsp[k] * s.rx;
      const double y = probs[k] - 0.25;
      a00 += x1 * x1;
      a01 += x1 * x2;
      a11 += x2 * x2;
      b0 += x1 * y;
      b1 += x2 * y;
      xs1.push_back(x1);
      xs2.push_back(x2);
      ys.push_back(y);
    }
  }
  const double det = a00 * a11 - a01 * a01;
  if (!(a00 > 0.0) || !(a11 > 0.0) || det <= 1e-12 * a00 * a11)
    throw std::invalid_argument("response_fit: degenerate design matrix");
  fit.lambda = (a11 * b0 - a01 * b1) / det;
  fit.lambda_prime = (a00 * b1 - a01 * b0) / det;
  double ss = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const double r = ys[k] - fit.lambda * xs1[k] - fit.lambda_prime * xs2[k];
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(ys.size()));
  fit.linearity_flag = fit.residual_rms > 1e-3;
  return fit;
}

AnisotropyReport anisotropy_diagnostics(const JointField& field, double slope_r_lo,
                                        double slope_r_hi) {
  AnisotropyReport rep;
  const auto& g = field.grid();
  const auto& gp = field.grid_prime();
  const double dr = std::max(g.spacing(), gp.spacing());
  if (slope_r_lo < 0.0) slope_r_lo = 0.5 * dr;
  if (slope_r_hi < 0.0) slope_r_hi = 6.5 * dr;

  const int nrings = static_cast<int>(std::ceil(std::sqrt(2.0) / dr)) + 1;
  rep.rings.resize(static_cast<std::size_t>(nrings));
  std::vector<double> down_sum(static_cast<std::size_t>(nrings), 0.0);
  for (int k = 0; k < nrings; ++k) {
    rep.rings[static_cast<std::size_t>(k)].r_lo = k == 0 ? 0.0 : (k - 0.5) * dr;
    rep.rings[static_cast<std::size_t>(k)].r_hi = (k + 0.5) * dr;
  }
  for (std::size_t i = 0; i < field.rows(); ++i) {
    const double m = g.value(static_cast<int>(i));
    for (std::size_t j = 0; j < field.cols(); ++j) {
      const double mp = gp.value(static_cast<int>(j));
      const double r = std::sqrt(m * m + mp * mp);
      const double v = field.p_at(i, j);
      int k = static_cast<int>(std::floor(r / dr + 0.5));
      if (k >= nrings) k = nrings - 1;
      RingStat& ring = rep.rings[static_cast<std::size_t>(k)];
      ring.mass += v;
      ring.r_mean += r;
      ring.count += 1;
      if (r > 0.0) {
        ring.cos_moment += v * (m / r);
        ring.sin_moment += v * (mp / r);
      }
      down_sum[static_cast<std::size_t>(k)] += 0.5 * (v - field.cu_at(i, j));
      if (r < 0.5) {
        rep.center_mass += v;
        if (r > 0.0) {
          rep.cos_moment += v * (m / r);
          rep.sin_moment += v * (mp / r);
        }
      }
    }
  }
  for (std::size_t k = 0; k < rep.rings.size(); ++k) {
    RingStat& ring = rep.rings[k];
    if (ring.count > 0) {
      ring.r_mean /= ring.count;
      ring.p_mean = ring.mass / ring.count;
    }
  }
  // Weighted log-linear fit of the down-branch ring means over the window.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (std::size_t k = 0; k < rep.rings.size(); ++k) {
    const RingStat& ring = rep.rings[k];
    if (ring.count == 0 || ring.r_mean < slope_r_lo || ring.r_mean > slope_r_hi) continue;
    const double mean_down = down_sum[k] / ring.count;
    if (!(mean_down > 0.0)) continue;
    const double x = ring.r_mean, y = std::log(mean_down);
    sw += 1; sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++used;
  }
  if (used >= 3 && sw * sxx - sx * sx > 0.0) {
    rep.down_slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    rep.down_slope_valid = true;
    rep.down_slope_r_lo = slope_r_lo;
    rep.down_slope_r_hi = slope_r_hi;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// FullOperator
// ---------------------------------------------------------------------------

FullOperator::FullOperator(const ApparatusParams& a, const ApparatusParams& ap)
    : grid_(a.N), grid_prime_(ap.N) {
  validate(a);
  validate(ap);
  ni_ = grid_.size();
  nj_ = grid_prime_.size();
  const std::size_t n = ni_ * nj_;
  const KernelParams kp{a.beta, a.Gamma, 1e-10};
  const KernelParams kq{ap.beta, ap.Gamma, 1e-10};
  const FrameTable fr = build_frames(grid_, grid_prime_, a, ap);
  w_ = fr.w;
  ux_ = fr.ux;
  uz_ = fr.uz;
  ap_.resize(n); am_.resize(n); bp_.resize(n); bm_.resize(n); kp_.resize(n); km_.resize(n);
  app_.resize(n); amp_.resize(n); bpp_.resize(n); bmp_.resize(n); kpp_.resize(n); kmp_.resize(n);
  const double c_a = kDissipatorChannels * a.gamma * a.N / 2.0;
  const double c_b = kDissipatorChannels * ap.gamma * ap.N / 2.0;
  for (std::size_t i = 0; i < ni_; ++i) {
    const double m = grid_.value(static_cast<int>(i));
    for (std::size_t j = 0; j < nj_; ++j) {
      const std::size_t k = i * nj_ + j;
      const double mp = grid_prime_.value(static_cast<int>(j));
      const double wp = a.J2 * m + a.J4 * m * m * m + a.g * uz_[k];
      const double wm = a.J2 * m + a.J4 * m * m * m - a.g * uz_[k];
      const double wpp = ap.J2 * mp + ap.J4 * mp * mp * mp + ap.g * ux_[k];
      const double wmp = ap.J2 * mp + ap.J4 * mp * mp * mp - ap.g * ux_[k];
      const RateCoefficients ra = rate_coefficients(m, wp, wm, kp);
      const RateCoefficients rb = rate_coefficients(mp, wpp, wmp, kq);
      ap_[k] = c_a * ra.alpha_plus;
      am_[k] = c_a * ra.alpha_minus;
      bp_[k] = c_a * ra.beta_plus;
      bm_[k] = c_a * ra.beta_minus;
      kp_[k] = c_a * ra.kappa_plus;
      km_[k] = c_a * ra.kappa_minus;
      app_[k] = c_b * rb.alpha_plus;
      amp_[k] = c_b * rb.alpha_minus;
      bpp_[k] = c_b * rb.beta_plus;
      bmp_[k] = c_b * rb.beta_minus;
      kpp_[k] = c_b * rb.kappa_plus;
      kmp_[k] = c_b * rb.kappa_minus;
      wmax_ = std::max(wmax_, w_[k]);
      max_rate_ = std::max(max_rate_, ap_[k] + am_[k] + app_[k] + amp_[k]);
    }
  }
}

FullField FullOperator::initial_state(const BlochState& s) const {
  validate(s);
  const std::vector<double> p0 = initial_magnet_dist(grid_);
  const std::vector<double> p0p = initial_magnet_dist(grid_prime_);
  FullField y;
  const std::size_t n = ni_ * nj_;
  y.p.resize(n); y.cx.resize(n); y.cy.resize(n); y.cz.resize(n);
  for (std::size_t i = 0; i < ni_; ++i)
    for (std::size_t j = 0; j < nj_; ++j) {
      const std::size_t k = i * nj_ + j;
      const double w = p0[i] * p0p[j];
      y.p[k] = w;
      y.cx[k] = s.rx * w;
      y.cy[k] = s.ry * w;
      y.cz[k] = s.rz * w;
    }
  return y;
}

std::vector<double> FullOperator::project_cu(const FullField& y) const {
  std::vector<double> cu(y.p.size());
  for (std::size_t k = 0; k < cu.size(); ++k) cu[k] = ux_[k] * y.cx[k] + uz_[k] * y.cz[k];
  return cu;
}

void FullOperator::rhs(const FullField& y, FullField& dy) const {
  const std::size_t n = ni_ * nj_;
  dy.p.assign(n, 0.0);
  dy.cx.assign(n, 0.0);
  dy.cy.assign(n, 0.0);
  dy.cz.assign(n, 0.0);

  auto up = [&](const std::vector<double>& f, std::size_t k, std::size_t i) {
    return i + 1 < ni_ ? f[k + nj_] : 0.0;
  };
  auto dn = [&](const std::vector<double>& f, std::size_t k, std::size_t i) {
    return i > 0 ? f[k - nj_] : 0.0;
  };
  auto upp = [&](const std::vector<double>& f, std::size_t k, std::size_t j) {
    return j + 1 < nj_ ? f[k + 1] : 0.0;
  };
  auto dnp = [&](const std::vector<double>& f, std::size_t k, std::size_t j) {
    return j > 0 ? f[k - 1] : 0.0;
  };

  // Flux arrays for the four equations (unprimed and primed, up and down).
  std::vector<double> f1(n), f2(n), f3(n), f4(n);
  auto apply = [&](std::vector<double>& out) {
    for (std::size_t i = 0; i < ni_; ++i)
      for (std::size_t j = 0; j < nj_; ++j) {
        const std::size_t k = i * nj_ + j;
        out[k] += ((up(f1, k, i) - f1[k]) + (dn(f2, k, i) - f2[k])) +
                  ((upp(f3, k, j) - f3[k]) + (dnp(f4, k, j) - f4[k]));
      }
  };

  // dP/dt
  for (std::size_t k = 0; k < n; ++k) {
    const double cu = ux_[k] * y.cx[k] + uz_[k] * y.cz[k];
    f1[k] = ap_[k] * y.p[k] + bp_[k] * cu;
    f2[k] = am_[k] * y.p[k] + bm_[k] * cu;
    f3[k] = app_[k] * y.p[k] + bpp_[k] * cu;
    f4[k] = amp_[k] * y.p[k] + bmp_[k] * cu;
  }
  apply(dy.p);

  // dCx/dt, precession + dissipator
  for (std::size_t k = 0; k < n; ++k) {
    dy.cx[k] = w_[k] * uz_[k] * y.cy[k];
    f1[k] = bp_[k] * ux_[k] * y.p[k] + ap_[k] * y.cx[k] + kp_[k] * y.cy[k] * uz_[k];
    f2[k] = bm_[k] * ux_[k] * y.p[k] + am_[k] * y.cx[k] + km_[k] * y.cy[k] * uz_[k];
    f3[k] = bpp_[k] * ux_[k] * y.p[k] + app_[k] * y.cx[k] + kpp_[k] * y.cy[k] * uz_[k];
    f4[k] = bmp_[k] * ux_[k] * y.p[k] + amp_[k] * y.cx[k] + kmp_[k] * y.cy[k] * uz_[k];
  }
  apply(dy.cx);

  // dCy/dt
  for (std::size_t k = 0; k < n; ++k) {
    const double mix = y.cz[k] * ux_[k] + uz_[k] * y.cx[k];
    dy.cy[k] = -w_[k] * (uz_[k] * y.cx[k] - ux_[k] * y.cz[k]);
    f1[k] = ap_[k] * y.cy[k] - kp_[k] * mix;
    f2[k] = am_[k] * y.cy[k] - km_[k] * mix;
    f3[k] = app_[k] * y.cy[k] - kpp_[k] * mix;
    f4[k] = amp_[k] * y.cy[k] - kmp_[k] * mix;
  }
  apply(dy.cy);

  // dCz/dt
  for (std::size_t k = 0; k < n; ++k) {
    dy.cz[k] = -w_[k] * ux_[k] * y.cy[k];
    f1[k] = bp_[k] * uz_[k] * y.p[k] + ap_[k] * y.cz[k] + kp_[k] * y.cy[k] * ux_[k];
    f2[k] = bm_[k] * uz_[k] * y.p[k] + am_[k] * y.cz[k] + km_[k] * y.cy[k] * ux_[k];
    f3[k] = bpp_[k] * uz_[k] * y.p[k] + app_[k] * y.cz[k] + kpp_[k] * y.cy[k] * ux_[k];
    f4[k] = bmp_[k] * uz_[k] * y.p[k] + amp_[k] * y.cz[k] + kmp_[k] * y.cy[k] * ux_[k];
  }
  apply(dy.cz);
}

void FullOperator::step_rk4(FullField& y, double dt) const {
  FullField k1, k2, k3, k4, t;
  auto axpy = [&](const FullField& base, const FullField& k, double h, FullField& out) {
    const std::size_t n = base.p.size();
    out.p.resize(n); out.cx.resize(n); out.cy.resize(n); out.cz.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.p[i] = base.p[i] + h * k.p[i];
      out.cx[i] = base.cx[i] + h * k.cx[i];
      out.cy[i] = base.cy[i] + h * k.cy[i];
      out.cz[i] = base.cz[i] + h * k.cz[i];
    }
  };
  rhs(y, k1);
  axpy(y, k1, 0.5 * dt, t);
  rhs(t, k2);
  axpy(y, k2, 0.5 * dt, t);
  rhs(t, k3);
  axpy(y, k3, dt, t);
  rhs(t, k4);
  const double w6 = dt / 6.0;
  for (std::size_t i = 0; i < y.p.size(); ++i) {
    y.p[i] += w6 * (k1.p[i] + 2.0 * k2.p[i] + 2.0 * k3.p[i] + k4.p[i]);
    y.cx[i] += w6 * (k1.cx[i] + 2.0 * k2.cx[i] + 2.0 * k3.cx[i] + k4.cx[i]);
    y.cy[i] += w6 * (k1.cy[i] + 2.0 * k2.cy[i] + 2.0 * k3.cy[i] + k4.cy[i]);
    y.cz[i] += w6 * (k1.cz[i] + 2.0 * k2.cz[i] + 2.0 * k3.cz[i] + k4.cz[i]);
  }
}

}  // namespace cwmeter
