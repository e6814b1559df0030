#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "starkstrip/common.hpp"
#include "starkstrip/dynamics.hpp"

namespace starkstrip {

/// Classical counterpart of the strip model:
///   H = -J cos(px - 2 pi alpha y) - J cos(py) + V(x) + F y
/// with a box potential V along x.
struct ClassicalParams {
  double alpha = 0.1;
  double J = 1.0;
  double F = 0.0;
  double Lx = 40.0;
  enum class Wall { Hard, Smooth, None } wall = Wall::Hard;
  double smooth_v0 = 1e3;  // quadratic wall stiffness outside |x| = Lx/2
};

struct PhaseSpacePoint {
  double x = 0.0, y = 0.0, px = 0.0, py = 0.0;
  double t = 0.0;
};

struct TrajectorySample {
  double t, x, y, px, py, ek;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  std::vector<double> wall_events;  // reflection times (hard wall)
  double energy_drift = 0.0;        // max |H - H(0)| away from reflections
};

inline double kinetic_energy(const ClassicalParams& p, double x, double y,
                             double px, double py) {
  (void)x;
  return -p.J * std::cos(px - 2.0 * pi * p.alpha * y) - p.J * std::cos(py);
}

inline double wall_potential(const ClassicalParams& p, double x) {
  if (p.wall != ClassicalParams::Wall::Smooth) return 0.0;
  double over = std::abs(x) - 0.5 * p.Lx;
  return over > 0.0 ? p.smooth_v0 * over * over : 0.0;
}

inline double total_energy(const ClassicalParams& p, double x, double y,
                           double px, double py) {
  return kinetic_energy(p, x, y, px, py) + wall_potential(p, x) + p.F * y;
}

namespace detail {

using State4 = std::array<double, 4>;  // x, y, px, py

inline State4 classical_rhs(const ClassicalParams& p, const State4& s) {
  double u = s[2] - 2.0 * pi * p.alpha * s[1];
  double su = std::sin(u);
  State4 d;
  d[0] = p.J * su;             // dx/dt
  d[1] = p.J * std::sin(s[3]); // dy/dt
  d[2] = 0.0;                  // dpx/dt = -V'(x)
  if (p.wall == ClassicalParams::Wall::Smooth) {
    double over = std::abs(s[0]) - 0.5 * p.Lx;
    if (over > 0.0) d[2] = -2.0 * p.smooth_v0 * over * (s[0] > 0 ? 1.0 : -1.0);
  }
  d[3] = 2.0 * pi * p.alpha * p.J * su - p.F;  // dpy/dt
  return d;
}

/// One modified-midpoint pass with n substeps.
inline State4 midpoint_pass(const ClassicalParams& p, const State4& s0,
                            double h, int n) {
  double hs = h / n;
  State4 z0 = s0, z1, d = classical_rhs(p, s0);
  for (int i = 0; i < 4; ++i) z1[i] = s0[i] + hs * d[i];
  for (int k = 1; k < n; ++k) {
    d = classical_rhs(p, z1);
    State4 z2;
    for (int i = 0; i < 4; ++i) z2[i] = z0[i] + 2.0 * hs * d[i];
    z0 = z1;
    z1 = z2;
  }
  d = classical_rhs(p, z1);
  State4 out;
  for (int i = 0; i < 4; ++i) out[i] = 0.5 * (z1[i] + z0[i] + hs * d[i]);
  return out;
}

/// Gragg extrapolation over the sequence {2,4,6,8}: the error expansion of
/// the midpoint rule is even in h, so four levels reach order eight. The
/// returned err estimates the last extrapolation correction.
inline State4 gbs_step(const ClassicalParams& p, const State4& s0, double h,
                       double& err) {
  constexpr int seq[4] = {2, 4, 6, 8};
  State4 table[4][4];
  for (int j = 0; j < 4; ++j) {
    table[j][0] = midpoint_pass(p, s0, h, seq[j]);
    for (int k = 1; k <= j; ++k) {
      double r = static_cast<double>(seq[j]) / seq[j - k];
      double den = r * r - 1.0;
      for (int i = 0; i < 4; ++i)
        table[j][k][i] = table[j][k - 1][i] +
                         (table[j][k - 1][i] - table[j - 1][k - 1][i]) / den;
    }
  }
  err = 0.0;
  for (int i = 0; i < 4; ++i)
    err = std::max(err, std::abs(table[3][3][i] - table[3][2][i]));
  return table[3][3];
}

}  // namespace detail

struct IntegrateOptions {
  double tol = 1e-11;        // per-step extrapolation error target
  double h_initial = 0.05;
  double h_max = 0.5;
  double wall_snap = 1e-12;  // |x| - Lx/2 residual at a reflection
};

/// Hamiltonian flow of the classical strip model. With the hard wall the
/// trajectory reflects elastically: the kinetic momentum u = px - 2 pi
/// alpha y reverses (px -> 4 pi alpha y - px), which conserves H exactly;
/// a literal sign flip of the canonical px would not.
inline Trajectory integrate(const PhaseSpacePoint& init,
                            const ClassicalParams& p, double t_final,
                            double sample_dt,
                            const IntegrateOptions& opt = {}) {
  if (p.wall == ClassicalParams::Wall::Hard &&
      std::abs(init.x) > 0.5 * p.Lx)
    throw ConfigError("initial point outside the hard-wall box");
  detail::State4 s{init.x, init.y, init.px, init.py};
  double t = 0.0;
  double h = opt.h_initial;
  const double half = 0.5 * p.Lx;
  double e0 = total_energy(p, s[0], s[1], s[2], s[3]);

  Trajectory traj;
  auto record = [&](double tnow) {
    traj.samples.push_back({tnow, s[0], s[1], s[2], s[3],
                            kinetic_energy(p, s[0], s[1], s[2], s[3])});
  };
  record(0.0);

  double next_sample = sample_dt;
  const bool hard = p.wall == ClassicalParams::Wall::Hard;

  while (t < t_final - 1e-12) {
    double h_try = std::min({h, opt.h_max, next_sample - t});
    if (hard) {
      double gap = half - std::abs(s[0]);
      if (gap < 0.5) h_try = std::min(h_try, 0.05 / std::max(p.J, 1e-6));
    }
    h_try = std::max(h_try, 1e-10);

    double err;
    detail::State4 s_new = detail::gbs_step(p, s, h_try, err);
    double scale = 0.0;
    for (double v : s) scale = std::max(scale, std::abs(v));
    scale = std::max(scale, 1.0);
    if (err > opt.tol * scale && h_try > 1e-9) {
      h = 0.5 * h_try;
      continue;
    }

    if (hard && std::abs(s_new[0]) > half) {
      // bisect the step length until the endpoint lands on the wall
      double lo = 0.0, hi = h_try;
      detail::State4 s_hit = s_new;
      for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double e2;
        detail::State4 cand = detail::gbs_step(p, s, mid, e2);
        if (std::abs(cand[0]) > half) {
          hi = mid;
        } else {
          lo = mid;
          s_hit = cand;
        }
        if (half - std::abs(s_hit[0]) < opt.wall_snap && lo > 0.0) break;
      }
      s = s_hit;
      t += lo;
      // reverse the kinetic momentum
      s[2] = 4.0 * pi * p.alpha * s[1] - s[2];
      traj.wall_events.push_back(t);
    } else {
      s = s_new;
      t += h_try;
      // step-size controller for order eight
      double grow = err > 0.0
                        ? 0.9 * std::pow(opt.tol * scale / err, 1.0 / 8.0)
                        : 4.0;
      h = h_try * std::min(4.0, std::max(0.25, grow));
    }

    traj.energy_drift = std::max(
        traj.energy_drift,
        std::abs(total_energy(p, s[0], s[1], s[2], s[3]) - e0));

    if (t >= next_sample - 1e-12) {
      record(next_sample);
      next_sample += sample_dt;
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Bloch-cycle segmentation

struct CycleSegment {
  bool edge = false;
  int side = 0;  // -1 left wall, +1 right wall (edge segments)
  double t_begin = 0.0, t_end = 0.0;
  double ek_begin = 0.0, ek_end = 0.0;
};

struct CycleReport {
  std::vector<CycleSegment> segments;
  std::vector<double> crossing_durations;    // all wall-to-wall intervals
  std::vector<double> drift_crossings;       // left -> right, at v*
  std::vector<double> return_crossings;      // right -> left, scattered
  double mean_crossing = 0.0;
  double mean_drift_crossing = 0.0;
  int detachments = 0;  // edge -> bulk transitions
};

/// Segment a trajectory into edge intervals and bulk crossings. A skipping
/// orbit wiggles by a cyclotron radius, so the edge condition uses
/// hysteresis: attach when the wall distance drops below enter_margin,
/// detach once it exceeds exit_margin.
inline CycleReport bloch_cycle_analysis(const Trajectory& traj,
                                        const ClassicalParams& p,
                                        double enter_margin = 2.0,
                                        double exit_margin = 6.0) {
  if (traj.samples.size() < 8)
    throw DimensionError("bloch_cycle_analysis: trajectory too short");
  const double half = 0.5 * p.Lx;

  CycleReport rep;
  int state = 0;  // 0 bulk, +-1 edge side
  {
    double d0 = half - std::abs(traj.samples[0].x);
    if (d0 < enter_margin) state = traj.samples[0].x > 0 ? +1 : -1;
  }
  CycleSegment seg{state != 0, state, traj.samples[0].t, traj.samples[0].t,
                   traj.samples[0].ek, traj.samples[0].ek};
  for (const auto& s : traj.samples) {
    double dist = half - std::abs(s.x);
    int side = s.x > 0 ? +1 : -1;
    int next = state;
    if (state == 0) {
      if (dist < enter_margin) next = side;
    } else {
      if (dist > exit_margin || side != state) next = 0;
      if (side != state && dist < enter_margin) next = side;
    }
    if (next == state) {
      seg.t_end = s.t;
      seg.ek_end = s.ek;
    } else {
      rep.segments.push_back(seg);
      state = next;
      seg = CycleSegment{state != 0, state, s.t, s.t, s.ek, s.ek};
    }
  }
  rep.segments.push_back(seg);

  for (size_t i = 0; i < rep.segments.size(); ++i) {
    const auto& sg = rep.segments[i];
    if (sg.edge) {
      if (i + 1 < rep.segments.size() && !rep.segments[i + 1].edge)
        ++rep.detachments;
      continue;
    }
    // wall-to-wall crossings only: both neighbors are edges on opposite sides
    if (i == 0 || i + 1 == rep.segments.size()) continue;
    const auto& a = rep.segments[i - 1];
    const auto& b = rep.segments[i + 1];
    if (a.edge && b.edge && a.side != b.side) {
      double dur = sg.t_end - sg.t_begin;
      rep.crossing_durations.push_back(dur);
      // the cycle is asymmetric: drift crossings go +x at v*, the return
      // flights after edge acceleration are fast and ballistic
      if (b.side == +1)
        rep.drift_crossings.push_back(dur);
      else
        rep.return_crossings.push_back(dur);
    }
  }
  auto mean_of = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double d : v) acc += d;
    return acc / v.size();
  };
  rep.mean_crossing = mean_of(rep.crossing_durations);
  rep.mean_drift_crossing = mean_of(rep.drift_crossings);
  return rep;
}

// ---------------------------------------------------------------------------
// Sensitivity to initial conditions

struct DivergenceReport {
  std::vector<double> times;
  std::vector<double> distance;
  double rate = 0.0;  // exponent of the pre-saturation fit
  double r2 = 0.0;
  double fit_t_begin = 0.0, fit_t_end = 0.0;
};

/// Twin-trajectory phase-space divergence; the growth exponent is fitted on
/// the window between 20 delta and the saturation scale.
inline DivergenceReport sensitivity_probe(const PhaseSpacePoint& init,
                                          double delta,
                                          const ClassicalParams& p,
                                          double t_final, double sample_dt,
                                          const IntegrateOptions& opt = {}) {
  PhaseSpacePoint twin = init;
  twin.y += delta;
  auto a = integrate(init, p, t_final, sample_dt, opt);
  auto b = integrate(twin, p, t_final, sample_dt, opt);
  size_t n = std::min(a.samples.size(), b.samples.size());

  DivergenceReport rep;
  for (size_t i = 0; i < n; ++i) {
    const auto& sa = a.samples[i];
    const auto& sb = b.samples[i];
    double d = std::sqrt(std::pow(sa.x - sb.x, 2) + std::pow(sa.y - sb.y, 2) +
                         std::pow(sa.px - sb.px, 2) +
                         std::pow(sa.py - sb.py, 2));
    rep.times.push_back(sa.t);
    rep.distance.push_back(d);
  }

  double d_lo = 20.0 * delta;
  double d_hi = 0.05 * std::max(p.Lx, 10.0);
  std::vector<double> ft, fd;
  for (size_t i = 0; i < rep.times.size(); ++i) {
    if (rep.distance[i] <= d_lo || rep.distance[i] <= 0.0) continue;
    if (rep.distance[i] >= d_hi) break;
    ft.push_back(rep.times[i]);
    fd.push_back(std::log(rep.distance[i]));
  }
  if (ft.size() >= 4) {
    auto fit = linear_fit(ft, fd);
    rep.rate = fit.slope;
    rep.r2 = fit.r2;
    rep.fit_t_begin = ft.front();
    rep.fit_t_end = ft.back();
  } else if (rep.distance.back() > 0.0 && rep.distance.front() >= 0.0) {
    // never grew past the fit floor: report the end-to-end rate
    double span = rep.times.back() - rep.times.front();
    if (span > 0.0 && rep.distance.back() > 0.0)
      rep.rate = std::log(rep.distance.back() / delta) / span;
    rep.r2 = 0.0;
  }
  return rep;
}

}  // namespace starkstrip
