#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "starkstrip/bands.hpp"
#include "starkstrip/common.hpp"
#include "starkstrip/landau_stark.hpp"
#include "starkstrip/lattice.hpp"
#include "starkstrip/linalg.hpp"

namespace starkstrip {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x,
                            const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DimensionError("linear_fit needs at least two points");
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  double den = n * sxx - sx * sx;
  if (den == 0.0) throw DimensionError("linear_fit: degenerate abscissae");
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0, ybar = sy / n;
  for (size_t i = 0; i < x.size(); ++i) {
    double p = f.slope * x[i] + f.intercept;
    ss_res += (y[i] - p) * (y[i] - p);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

// ---------------------------------------------------------------------------
// Band projector: F = 0 strip eigenbasis on the y-window (treated as a ring
// of Ny transverse momenta), classified into the q magnetic bands plus a
// gap/edge bucket. Complete and orthonormal, so populations sum to 1.

class BandProjector {
 public:
  BandProjector(const LatticeConfig& cfg, const BandStructure& bulk_bands)
      : cfg_(cfg), q_(bulk_bands.q) {
    const int ny = cfg.ny(), lx = cfg.Lx;
    HarperChain chain = HarperChain::for_strip(cfg);
    basis_.resize(ny);
    bucket_.assign(ny, std::vector<int>(lx, q_));
    for (int r = 0; r < ny; ++r) {
      double kap = 2.0 * pi * r / ny;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(chain.dense(kap));
      basis_[r] = es.eigenvectors();
      for (int j = 0; j < lx; ++j) {
        double e = es.eigenvalues()[j];
        for (int b = 0; b < q_; ++b) {
          auto [lo, hi] = bulk_bands.band_intervals[b];
          if (e >= lo - 1e-9 && e <= hi + 1e-9) {
            bucket_[r][j] = b;
            break;
          }
        }
      }
    }
    dft_.resize(ny, ny);
    for (int mj = 0; mj < ny; ++mj) {
      int m = cfg.m_min + mj;
      for (int r = 0; r < ny; ++r)
        dft_(mj, r) = std::exp(cxd(0.0, -2.0 * pi * r * m / ny));
    }
    gauge_.resize(lx, ny);
    for (int li = 0; li < lx; ++li) {
      int l = cfg.l_min() + li;
      for (int mj = 0; mj < ny; ++mj) {
        int m = cfg.m_min + mj;
        gauge_(li, mj) = std::exp(cxd(0.0, -2.0 * pi * cfg.alpha() * l * m));
      }
    }
  }

  int bands() const { return q_; }

  /// populations[0..q-1] = magnetic bands, populations[q] = gap/edge bucket.
  Eigen::VectorXd populations(const WaveFunction& psi) const {
    if (!(psi.cfg == cfg_)) throw DimensionError("projector grid mismatch");
    const int ny = cfg_.ny(), lx = cfg_.Lx;
    Eigen::MatrixXcd scaled(lx, ny);
    for (int li = 0; li < lx; ++li)
      for (int mj = 0; mj < ny; ++mj)
        scaled(li, mj) =
            psi.amps[static_cast<long>(li) * ny + mj] * gauge_(li, mj);
    Eigen::MatrixXcd T = scaled * dft_;  // (lx x ny): amplitudes per kappa_r
    Eigen::VectorXd pop = Eigen::VectorXd::Zero(q_ + 1);
    double inv_ny = 1.0 / ny;
    for (int r = 0; r < ny; ++r) {
      Eigen::VectorXcd amp = basis_[r].cast<cxd>().adjoint() * T.col(r);
      for (int j = 0; j < lx; ++j)
        pop[bucket_[r][j]] += std::norm(amp[j]) * inv_ny;
    }
    return pop;
  }

 private:
  LatticeConfig cfg_;
  int q_;
  std::vector<Eigen::MatrixXd> basis_;    // per kappa_r
  std::vector<std::vector<int>> bucket_;  // per (kappa_r, state)
  Eigen::MatrixXcd dft_;                  // e^{-i kappa_r m}
  Eigen::MatrixXcd gauge_;                // e^{-i 2 pi alpha l m}
};

// ---------------------------------------------------------------------------
// Cluster counting on thresholded density (4-connectivity), used to
// quantify wave-packet proliferation.

inline int count_density_clusters(const Eigen::MatrixXd& rho,
                                  double rel_threshold, bool periodic_x) {
  const int ny = static_cast<int>(rho.rows());
  const int lx = static_cast<int>(rho.cols());
  double cut = rel_threshold * rho.maxCoeff();
  Eigen::MatrixXi mark = Eigen::MatrixXi::Zero(ny, lx);
  int clusters = 0;
  std::vector<std::pair<int, int>> stack;
  for (int li = 0; li < lx; ++li)
    for (int mj = 0; mj < ny; ++mj) {
      if (rho(mj, li) <= cut || mark(mj, li)) continue;
      ++clusters;
      stack.push_back({mj, li});
      mark(mj, li) = 1;
      while (!stack.empty()) {
        auto [m, l] = stack.back();
        stack.pop_back();
        auto visit = [&](int mm, int ll) {
          if (ll < 0) ll = periodic_x ? lx - 1 : -1;
          if (ll >= lx) ll = periodic_x ? 0 : -1;
          if (mm < 0 || mm >= ny || ll < 0) return;
          if (rho(mm, ll) > cut && !mark(mm, ll)) {
            mark(mm, ll) = 1;
            stack.push_back({mm, ll});
          }
        };
        visit(m + 1, l);
        visit(m - 1, l);
        visit(m, l + 1);
        visit(m, l - 1);
      }
    }
  return clusters;
}

inline Eigen::MatrixXd density_grid(const WaveFunction& psi) {
  Eigen::MatrixXd rho(psi.cfg.ny(), psi.cfg.Lx);
  for (int li = 0; li < psi.cfg.Lx; ++li)
    for (int mj = 0; mj < psi.cfg.ny(); ++mj)
      rho(mj, li) =
          std::norm(psi.amps[static_cast<long>(li) * psi.cfg.ny() + mj]);
  return rho;
}

/// Clusters per band stripe: stripe i is centered on the y where band i's
/// kinetic energy balances the potential, y_i = (E_total - Eband_i)/F.
struct StripeClusterReport {
  std::vector<int> per_band;
  std::vector<double> stripe_center;
  double mean = 0.0;
  int stripes_counted = 0;
};

inline StripeClusterReport band_stripe_clusters(const WaveFunction& psi,
                                                const BandStructure& bands,
                                                double e_total,
                                                double rel_threshold = 1e-3) {
  const LatticeConfig& cfg = psi.cfg;
  Eigen::MatrixXd rho = density_grid(psi);
  StripeClusterReport rep;
  int q = bands.band_count();
  std::vector<double> centers(q);
  for (int b = 0; b < q; ++b) {
    double eb = 0.5 * (bands.band_intervals[b].first +
                       bands.band_intervals[b].second);
    centers[b] = (e_total - eb) / cfg.F;
  }
  double total = 0.0;
  for (int b = 0; b < q; ++b) {
    double half = 1e30;
    if (b > 0) half = std::min(half, 0.5 * std::abs(centers[b] - centers[b - 1]));
    if (b + 1 < q)
      half = std::min(half, 0.5 * std::abs(centers[b + 1] - centers[b]));
    if (half > 1e29) half = 2.0 * cfg.J / cfg.F;
    int lo = static_cast<int>(std::floor(centers[b] - half)) - cfg.m_min;
    int hi = static_cast<int>(std::ceil(centers[b] + half)) - cfg.m_min;
    rep.stripe_center.push_back(centers[b]);
    if (hi < 0 || lo >= cfg.ny() || hi <= lo) {
      rep.per_band.push_back(-1);  // stripe outside the window
      continue;
    }
    lo = std::max(lo, 0);
    hi = std::min(hi, cfg.ny() - 1);
    Eigen::MatrixXd slab = rho.middleRows(lo, hi - lo + 1);
    if (slab.maxCoeff() <= 0.0) {
      rep.per_band.push_back(-1);
      continue;
    }
    int c = count_density_clusters(slab, rel_threshold,
                                   cfg.bc_x == BoundaryX::Periodic);
    rep.per_band.push_back(c);
    total += c;
    ++rep.stripes_counted;
  }
  rep.mean = rep.stripes_counted > 0 ? total / rep.stripes_counted : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Propagation

struct Observables {
  double t = 0.0;
  double mean_x = 0.0, mean_y = 0.0;
  double var_x = 0.0, var_y = 0.0;
  double norm = 1.0;
  double energy = 0.0;
  Eigen::VectorXd band_populations;  // empty unless requested
  int n_clusters = 0;
};

struct PropagateOptions {
  double escape_tol = 1e-6;     // weight within 3 sites of the y-window edge
  bool track_bands = false;
  bool track_clusters = false;
  double cluster_threshold = 1e-3;
  std::vector<double> snapshot_times;  // subset of checkpoints to keep
  const BandProjector* projector = nullptr;  // required if track_bands
};

struct PropagationRun {
  LatticeConfig cfg;
  std::vector<Observables> observables;       // one per checkpoint
  std::vector<double> snapshot_times;
  std::vector<WaveFunction> snapshots;
};

namespace detail {

inline void fill_observables(const WaveFunction& psi,
                             const HamiltonianOperator& H, double t,
                             double prev_mean_x, bool have_prev,
                             const PropagateOptions& opt, Observables& obs) {
  const LatticeConfig& cfg = psi.cfg;
  obs.t = t;
  obs.norm = psi.norm();
  obs.energy = psi.amps.dot(H.apply(psi.amps)).real() /
               (obs.norm * obs.norm);

  const int lx = cfg.Lx, ny = cfg.ny();
  Eigen::VectorXd px = Eigen::VectorXd::Zero(lx);
  Eigen::VectorXd py = Eigen::VectorXd::Zero(ny);
  for (int li = 0; li < lx; ++li)
    for (int mj = 0; mj < ny; ++mj) {
      double w = std::norm(psi.amps[static_cast<long>(li) * ny + mj]);
      px[li] += w;
      py[mj] += w;
    }
  double wsum = px.sum();
  px /= wsum;
  py /= wsum;

  obs.mean_y = 0.0;
  for (int mj = 0; mj < ny; ++mj) obs.mean_y += (cfg.m_min + mj) * py[mj];
  obs.var_y = 0.0;
  for (int mj = 0; mj < ny; ++mj) {
    double d = (cfg.m_min + mj) - obs.mean_y;
    obs.var_y += d * d * py[mj];
  }

  if (cfg.bc_x == BoundaryX::Periodic) {
    cxd z = 0.0;
    for (int li = 0; li < lx; ++li) {
      double x = cfg.l_min() + li;
      z += px[li] * std::exp(cxd(0.0, 2.0 * pi * x / lx));
    }
    double mean = std::arg(z) * lx / (2.0 * pi);
    if (have_prev) {
      // unwrap onto the branch closest to the previous checkpoint
      double k = std::round((prev_mean_x - mean) / lx);
      mean += k * lx;
    }
    obs.mean_x = mean;
    obs.var_x = 0.0;
    for (int li = 0; li < lx; ++li) {
      double d = std::remainder((cfg.l_min() + li) - mean, static_cast<double>(lx));
      obs.var_x += d * d * px[li];
    }
  } else {
    obs.mean_x = 0.0;
    for (int li = 0; li < lx; ++li) obs.mean_x += (cfg.l_min() + li) * px[li];
    obs.var_x = 0.0;
    for (int li = 0; li < lx; ++li) {
      double d = (cfg.l_min() + li) - obs.mean_x;
      obs.var_x += d * d * px[li];
    }
  }

  // window-escape guard: reflections off the y-truncation are unphysical
  double edge_weight = 0.0;
  for (int li = 0; li < lx; ++li)
    for (int mj : {0, 1, 2, ny - 3, ny - 2, ny - 1})
      if (mj >= 0 && mj < ny)
        edge_weight += std::norm(psi.amps[static_cast<long>(li) * ny + mj]);
  if (edge_weight > opt.escape_tol)
    throw WindowEscapeError(
        "propagate: packet reached the y-window edge at t = " +
        std::to_string(t));

  if (opt.track_bands) {
    if (!opt.projector) throw DimensionError("track_bands needs a projector");
    obs.band_populations = opt.projector->populations(psi);
  }
  if (opt.track_clusters)
    obs.n_clusters = count_density_clusters(
        density_grid(psi), opt.cluster_threshold,
        cfg.bc_x == BoundaryX::Periodic);
}

}  // namespace detail

/// Unitary evolution of psi0 under the strip Hamiltonian with observables
/// recorded at the given checkpoints (Chebyshev propagation between them).
inline PropagationRun propagate(const WaveFunction& psi0,
                                const std::vector<double>& checkpoints,
                                const PropagateOptions& opt = {}) {
  if (checkpoints.empty()) throw DimensionError("propagate: no checkpoints");
  for (size_t i = 1; i < checkpoints.size(); ++i)
    if (checkpoints[i] <= checkpoints[i - 1])
      throw DimensionError("propagate: checkpoints must increase");

  const LatticeConfig& cfg = psi0.cfg;
  HamiltonianOperator H(cfg);
  auto [lo, hi] = H.spectral_bounds();

  PropagationRun run;
  run.cfg = cfg;
  WaveFunction psi = psi0;
  psi.normalize();

  double t = 0.0;
  bool have_prev = false;
  double prev_mean_x = 0.0;
  auto record = [&](double tnow) {
    Observables obs;
    detail::fill_observables(psi, H, tnow, prev_mean_x, have_prev, opt, obs);
    prev_mean_x = obs.mean_x;
    have_prev = true;
    run.observables.push_back(std::move(obs));
    for (double ts : opt.snapshot_times)
      if (std::abs(ts - tnow) < 1e-9 * std::max(1.0, std::abs(ts))) {
        run.snapshot_times.push_back(tnow);
        run.snapshots.push_back(psi);
      }
  };

  if (checkpoints.front() == 0.0) record(0.0);
  size_t start = checkpoints.front() == 0.0 ? 1 : 0;
  for (size_t c = start; c < checkpoints.size(); ++c) {
    double dt = checkpoints[c] - t;
    chebyshev_propagate([&](const cxd* in, cxd* out) { H.apply_raw(in, out); },
                        cfg.n_sites(), lo, hi, dt, psi.amps);
    t = checkpoints[c];
    record(t);
  }
  return run;
}

inline std::vector<double> checkpoint_grid(double t_final, int count) {
  std::vector<double> ts;
  for (int i = 0; i <= count; ++i) ts.push_back(t_final * i / count);
  return ts;
}

// ---------------------------------------------------------------------------
// Transporting wave packets

struct TransportingPacketOptions {
  double width = 5.0;  // real-space Gaussian width (sites)
  /// Kinetic energy of the carrying branch; NaN selects the center of the
  /// lowest magnetic band, whose v* line is the cleanest.
  double kinetic_energy = std::numeric_limits<double>::quiet_NaN();
  int center_l = 0;
  int center_m = 0;
};

/// Gaussian superposition of transporting Stark-Harper states on the
/// configured grid. Throws if F >= F_cr (no transporting states there).
inline WaveFunction make_transporting_packet(
    const LatticeConfig& cfg, const TransportingPacketOptions& opt = {}) {
  cfg.validate();
  if (cfg.alpha() <= 0.0)
    throw ConfigError("transporting packet needs alpha > 0");
  double fcr = critical_field(cfg.alpha(), cfg.J);
  if (cfg.F >= fcr)
    throw ConfigError("no transporting states: F >= F_cr = " +
                      std::to_string(fcr));
  if (cfg.bc_x == BoundaryX::Dirichlet) {
    // keep the envelope plus a cyclotron radius clear of the open ends
    double margin = opt.width + 2.0;
    if (cfg.l_max() - opt.center_l < margin ||
        opt.center_l - cfg.l_min() < margin)
      throw ConfigError("packet center too close to the strip boundary");
  }
  const int lx = cfg.Lx;
  const double vstar = drift_velocity(cfg.alpha(), cfg.F);
  const double sigma_k = 1.0 / opt.width;

  // x-torus momenta, walked outward from the grid point nearest kappa = 0
  std::vector<double> kappas(lx);
  for (int c = 0; c < lx; ++c)
    kappas[c] = fold_phase(2.0 * pi * c / lx);
  std::vector<int> order(lx);
  for (int c = 0; c < lx; ++c) order[c] = c;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return kappas[a] < kappas[b]; });
  int i0 = 0;
  for (int i = 0; i < lx; ++i)
    if (std::abs(kappas[order[i]]) < std::abs(kappas[order[i0]])) i0 = i;

  // y-centering is an energy shift of the carrying branch (ladder property)
  auto bands = harper_bands(cfg.alpha_num, cfg.alpha_den, cfg.J, 32);
  double e_kin = opt.kinetic_energy;
  if (std::isnan(e_kin))
    e_kin = 0.5 * (bands.band_intervals[0].first +
                   bands.band_intervals[0].second);
  const double e_center = e_kin + cfg.F * opt.center_m;
  // rung spacing of the well ladder: wells repeat every q sites in y
  const double rung = cfg.F * cfg.alpha_den;

  struct Carrier {
    double kappa = 0.0;
    double energy = 0.0;
    Eigen::VectorXd b;  // on the cfg y-window
  };
  std::vector<Carrier> carriers(lx);

  // Follow the diabatic transporting line E = e_center + v* (kappa - k_ref).
  // Near inter-well resonances the line fragments into hybridized pairs
  // whose individual slopes stray from v*; projecting the previous carrier
  // onto the local energy multiplet recombines them into the transported
  // well state.
  auto embed = [&](const Eigen::VectorXd& b, int m_min_src) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(cfg.ny());
    for (int i = 0; i < b.size(); ++i) {
      int m = m_min_src + i;
      if (m >= cfg.m_min && m <= cfg.m_max) out[m - cfg.m_min] = b[i];
    }
    return out;
  };

  auto solve_at = [&](double kap, double e_pred, const Eigen::VectorXd* prev,
                      double half_width) -> Carrier {
    auto lad = stark_harper_ladder(cfg.alpha_num, cfg.alpha_den, cfg.J, cfg.F,
                                   kap, e_pred, half_width);
    if (lad.states.empty())
      throw ConvergenceError("packet: no carrier state found");
    Carrier c;
    c.kappa = kap;
    if (!prev) {
      // seed: nearest rung of the carrying branch, identified by the
      // kinetic energy E - F <y> of the candidate states
      auto kinetic = [&](const StarkLadderState& st) {
        double ym = 0.0;
        for (int i = 0; i < st.b.size(); ++i)
          ym += (lad.m_min + i) * st.b[i] * st.b[i];
        return st.energy - cfg.F * ym;
      };
      const StarkLadderState* best = nullptr;
      double score = 1e300;
      for (int pass = 0; pass < 3 && !best; ++pass) {
        for (auto& st : lad.states) {
          if (pass == 0 && !st.transporting) continue;
          if (pass <= 1 && std::abs(kinetic(st) - e_kin) > 0.3 * rung)
            continue;
          double d = std::abs(st.energy - e_pred);
          if (d < score) {
            score = d;
            best = &st;
          }
        }
      }
      c.energy = best->energy;
      c.b = embed(best->b, lad.m_min);
      return c;
    }
    // diabatic continuation: project the previous carrier onto the window
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(cfg.ny());
    double e_acc = 0.0, w_acc = 0.0;
    for (auto& st : lad.states) {
      Eigen::VectorXd b = embed(st.b, lad.m_min);
      double coef = prev->dot(b);
      acc += coef * b;
      e_acc += coef * coef * st.energy;
      w_acc += coef * coef;
    }
    double nn = acc.norm();
    if (nn < 0.5)
      throw ConvergenceError("packet: carrier lost while tracking the line");
    c.b = acc / nn;
    c.energy = e_acc / w_acc;
    return c;
  };

  // the seed window spans more than half a rung, so at least one rung of
  // the carrying branch falls inside even when the requested energy sits
  // between rungs; the walk then tracks the line with a tight window
  double k_ref = kappas[order[i0]];
  double seed_hw = std::max(2.0 * cfg.F, 0.55 * rung);
  carriers[order[i0]] = solve_at(k_ref, e_center, nullptr, seed_hw);
  for (int i = i0 + 1; i < lx; ++i) {
    double kap = kappas[order[i]];
    const auto& prev = carriers[order[i - 1]];
    carriers[order[i]] = solve_at(
        kap, prev.energy + vstar * (kap - prev.kappa), &prev.b, 2.0 * cfg.F);
  }
  for (int i = i0 - 1; i >= 0; --i) {
    double kap = kappas[order[i]];
    const auto& prev = carriers[order[i + 1]];
    carriers[order[i]] = solve_at(
        kap, prev.energy + vstar * (kap - prev.kappa), &prev.b, 2.0 * cfg.F);
  }

  WaveFunction psi(cfg);
  const int ny = cfg.ny();
  for (int c = 0; c < lx; ++c) {
    double dk = fold_phase(kappas[c] - k_ref);
    double w = std::exp(-dk * dk / (2.0 * sigma_k * sigma_k));
    if (w < 1e-12) continue;
    for (int li = 0; li < lx; ++li) {
      int l = cfg.l_min() + li;
      cxd ph = w * std::exp(cxd(0.0, kappas[c] * (l - opt.center_l)));
      for (int mj = 0; mj < ny; ++mj)
        psi.amps[static_cast<long>(li) * ny + mj] += ph * carriers[c].b[mj];
    }
  }
  psi.normalize();
  return psi;
}

// ---------------------------------------------------------------------------
// Canned runs

struct EdgeBlochRun {
  PropagationRun run;
  double e_total = 0.0;
  std::vector<StripeClusterReport> stripe_reports;  // per checkpoint
};

/// Dirichlet-strip run of a transporting packet with checkpoints on the
/// Bloch-period grid; tracks band populations and packet proliferation.
inline EdgeBlochRun edge_bloch_run(const LatticeConfig& cfg, double t_final,
                                   int checkpoints_per_tb = 1,
                                   const TransportingPacketOptions& popt = {},
                                   const BandStructure* bands = nullptr,
                                   const BandProjector* projector = nullptr) {
  if (cfg.bc_x != BoundaryX::Dirichlet)
    throw ConfigError("edge_bloch_run expects Dirichlet x-boundaries");
  WaveFunction psi0 = make_transporting_packet(cfg, popt);
  const double T_B = bloch_period(cfg.F);
  int n = static_cast<int>(std::round(t_final / T_B * checkpoints_per_tb));
  std::vector<double> ts;
  for (int i = 0; i <= n; ++i) ts.push_back(T_B * i / checkpoints_per_tb);

  PropagateOptions opt;
  opt.track_clusters = true;
  if (projector) {
    opt.track_bands = true;
    opt.projector = projector;
  }
  opt.snapshot_times = {0.0, ts.back()};
  if (ts.size() > 2) opt.snapshot_times.push_back(ts[ts.size() / 2]);

  EdgeBlochRun out;
  out.run = propagate(psi0, ts, opt);
  out.e_total = out.run.observables.front().energy;
  if (bands) {
    for (auto& snap : out.run.snapshots)
      out.stripe_reports.push_back(
          band_stripe_clusters(snap, *bands, out.e_total));
  }
  return out;
}

struct SupercriticalReport {
  PropagationRun run;
  double mean_velocity = 0.0;
  LinearFit width_fit;       // sqrt(var_x) vs t
  double third_moment = 0.0; // asymmetry of the final x-marginal
};

/// Ballistic-spreading diagnostics above the critical field (periodic x).
inline SupercriticalReport supercritical_run(const LatticeConfig& cfg,
                                             const WaveFunction& psi0,
                                             double t_final,
                                             int checkpoints = 24) {
  if (cfg.bc_x != BoundaryX::Periodic)
    throw ConfigError("supercritical_run expects periodic x");
  if (cfg.alpha() > 0.0 && cfg.J > 0.0 &&
      cfg.F <= critical_field(cfg.alpha(), cfg.J))
    throw ConfigError("supercritical_run requires F > F_cr");
  SupercriticalReport rep;
  PropagateOptions opt;
  opt.snapshot_times = {t_final};
  rep.run = propagate(psi0, checkpoint_grid(t_final, checkpoints), opt);
  std::vector<double> ts, widths, xs;
  for (auto& o : rep.run.observables) {
    ts.push_back(o.t);
    widths.push_back(std::sqrt(o.var_x));
    xs.push_back(o.mean_x);
  }
  rep.width_fit = linear_fit(ts, widths);
  rep.mean_velocity = linear_fit(ts, xs).slope;

  // third central moment of the final x-marginal (min-image distances)
  if (!rep.run.snapshots.empty()) {
    const WaveFunction& snap = rep.run.snapshots.back();
    const int lx = cfg.Lx, ny = cfg.ny();
    Eigen::VectorXd px = Eigen::VectorXd::Zero(lx);
    for (int li = 0; li < lx; ++li)
      for (int mj = 0; mj < ny; ++mj)
        px[li] += std::norm(snap.amps[static_cast<long>(li) * ny + mj]);
    px /= px.sum();
    double mean = rep.run.observables.back().mean_x;
    double m3 = 0.0;
    for (int li = 0; li < lx; ++li) {
      double d = std::remainder((cfg.l_min() + li) - mean,
                                static_cast<double>(lx));
      m3 += d * d * d * px[li];
    }
    rep.third_moment = m3;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Ground-band depletion via the exact transverse-momentum reduction: the
// F = 0 band eigenstates are plane waves along y, so their 2D evolution
// separates into driven 1D Harper problems, one per momentum sector.

struct DepletionResult {
  std::vector<double> times;
  std::vector<double> ground_population;  // ensemble mean
  double beta = 0.0;                      // fitted linear depletion rate
  LinearFit fit;
  int ensemble_size = 0;
};

struct DepletionOptions {
  int kappa_samples = 8;
  int checkpoints = 96;
  double fit_lo = 0.9;   // fit window: population between fit_hi and fit_lo
  double fit_hi = 0.35;
  double dt_max = 0.25;
};

inline DepletionResult band_depletion(const LatticeConfig& cfg, double t_final,
                                      const DepletionOptions& opt = {}) {
  if (!(cfg.F > 0.0)) throw ConfigError("band_depletion requires F > 0");
  auto bands = harper_bands(cfg.alpha_num, cfg.alpha_den, cfg.J, 64);
  auto [lo0, hi0] = bands.band_intervals[0];
  HarperChain chain = HarperChain::for_strip(cfg);

  struct Member {
    double kappa0;
    Eigen::VectorXcd b;
  };
  std::vector<Member> members;
  for (int s = 0; s < opt.kappa_samples; ++s) {
    double kap = 2.0 * pi * (s + 0.5) / opt.kappa_samples;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(chain.dense(kap));
    for (int j = 0; j < cfg.Lx; ++j) {
      double e = es.eigenvalues()[j];
      if (e < lo0 - 1e-9 || e > hi0 + 1e-9) continue;
      if (cfg.bc_x == BoundaryX::Dirichlet &&
          classify_edge(es.eigenvectors().col(j).cast<cxd>()) !=
              StateLabel::Bulk)
        continue;
      members.push_back({kap, es.eigenvectors().col(j).cast<cxd>()});
    }
  }
  if (members.size() < 4)
    throw ConfigError("band_depletion: too few ground-band bulk states");

  DepletionResult res;
  res.ensemble_size = static_cast<int>(members.size());
  res.times = checkpoint_grid(t_final, opt.checkpoints);
  res.ground_population.assign(res.times.size(), 0.0);

  std::vector<std::vector<double>> member_pop(members.size());
  parallel_for(static_cast<long>(members.size()), [&](long mi) {
    Member mem = members[mi];
    Eigen::VectorXcd b = mem.b;
    std::vector<double> pop;
    pop.reserve(res.times.size());
    double t = 0.0;
    for (size_t c = 0; c < res.times.size(); ++c) {
      double target = res.times[c];
      double dt_cap = std::min(opt.dt_max, 0.009 / cfg.F);
      while (t < target - 1e-12) {
        double dt = std::min(dt_cap, target - t);
        // the strip gauge drives the transverse momentum downward
        b = driven_harper_step(b, mem.kappa0, t, dt, cfg.alpha(), cfg.J,
                               cfg.F, cfg.bc_x, cfg.l_min(), -1);
        t += dt;
      }
      double theta = mem.kappa0 - cfg.F * t;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(chain.dense(theta));
      double p0 = 0.0;
      for (int j = 0; j < cfg.Lx; ++j) {
        double e = es.eigenvalues()[j];
        if (e < lo0 - 1e-9 || e > hi0 + 1e-9) continue;
        p0 += std::norm(es.eigenvectors().col(j).cast<cxd>().dot(b));
      }
      pop.push_back(p0);
    }
    member_pop[mi] = std::move(pop);
  });
  for (auto& pop : member_pop)
    for (size_t c = 0; c < pop.size(); ++c)
      res.ground_population[c] += pop[c] / members.size();

  // linear fit on the main depletion window; if the population never drops
  // out of the window (slow Landau-Zener regime) fit the whole curve
  std::vector<double> ft, fp;
  for (size_t c = 0; c < res.times.size(); ++c) {
    double p = res.ground_population[c];
    if (p <= opt.fit_lo && p >= opt.fit_hi) {
      ft.push_back(res.times[c]);
      fp.push_back(p);
    }
  }
  if (ft.size() < 3) {
    bool never_depleted =
        res.ground_population.back() > opt.fit_lo ||
        *std::min_element(res.ground_population.begin(),
                          res.ground_population.end()) > opt.fit_hi;
    if (!never_depleted)
      throw ConvergenceError(
          "band_depletion: depletion completed before three checkpoints");
    ft = res.times;
    fp = res.ground_population;
  }
  res.fit = linear_fit(ft, fp);
  res.beta = -res.fit.slope;
  return res;
}

}  // namespace starkstrip
