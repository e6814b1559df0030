#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <utility>
#include <vector>

#include "starkstrip/common.hpp"
#include "starkstrip/lattice.hpp"
#include "starkstrip/linalg.hpp"

namespace starkstrip {

/// Cyclotron frequency 2 pi alpha J; also the critical field separating the
/// transporting regime (F < F_cr) from ballistic spreading (F > F_cr).
inline double critical_field(double alpha, double J) {
  if (alpha <= 0.0)
    throw ConfigError("critical field undefined at alpha = 0");
  return 2.0 * pi * alpha * J;
}

inline double cyclotron_frequency(double alpha, double J) {
  return critical_field(alpha, J);
}

inline double drift_velocity(double alpha, double F) {
  if (alpha <= 0.0) throw ConfigError("drift velocity undefined at alpha = 0");
  return F / (2.0 * pi * alpha);
}

inline double bloch_period(double F) {
  if (F <= 0.0) throw ConfigError("Bloch period undefined at F = 0");
  return 2.0 * pi / F;
}

enum class StateLabel { Bulk, EdgeLeft, EdgeRight };

struct BandStructure {
  Eigen::VectorXd kappa_grid;
  /// energies(nu, k): ascending in nu for each kappa.
  Eigen::MatrixXd energies;
  /// Per-kappa eigenvector matrices, columns ordered like energies.
  std::vector<Eigen::MatrixXcd> eigenvectors;
  /// labels[k][nu]
  std::vector<std::vector<StateLabel>> labels;
  BoundaryX bc = BoundaryX::Periodic;
  int q = 1;
  /// Exact band intervals [lo, hi] per band (periodic spectra only).
  std::vector<std::pair<double, double>> band_intervals;

  int band_count() const { return static_cast<int>(energies.rows()); }
};

inline Eigen::VectorXd kappa_grid_uniform(int count) {
  // endpoint-exclusive uniform grid on [-pi, pi)
  Eigen::VectorXd g(count);
  for (int k = 0; k < count; ++k) g[k] = -pi + 2.0 * pi * k / count;
  return g;
}

namespace detail {

/// q x q magnetic Bloch matrix of the Harper model:
/// (M u)_j = -J/2 (e^{i k1} u_{j+1} + e^{-i k1} u_{j-1}) - J cos(2 pi alpha j + k2) u_j
inline Eigen::MatrixXcd harper_bloch_matrix(int q, double alpha, double J,
                                            double k1, double k2) {
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(q, q);
  cxd hop = -0.5 * J * std::exp(cxd(0.0, k1));
  for (int j = 0; j < q; ++j) {
    M(j, j) += -J * std::cos(2.0 * pi * alpha * j + k2);
    int jn = (j + 1) % q;
    M(j, jn) += hop;
    M(jn, j) += std::conj(hop);
  }
  return M;
}

inline Eigen::VectorXd hermitian_eigenvalues(const Eigen::MatrixXcd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M,
                                                     Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace detail

/// Magnetic bands of the infinite lattice at alpha = r/q. The Bloch matrix
/// dispersion depends on quasimomenta only through cos(q k1) + cos(q k2)
/// (Chambers' relation), so the diagonal sweep k1 = k2 = kappa covers every
/// band completely and the extreme points (0,0), (pi/q, pi/q) give exact
/// band edges.
inline BandStructure harper_bands(int r, int q_in, double J,
                                  int kappa_count = 256,
                                  bool want_vectors = false) {
  LatticeConfig tmp;  // reuse alpha normalization
  tmp.alpha_num = r;
  tmp.alpha_den = q_in;
  tmp.normalize_alpha();
  const int q = tmp.alpha_den;
  const double alpha = tmp.alpha();
  if (kappa_count < 1) throw ConfigError("kappa_count must be >= 1");

  BandStructure bs;
  bs.q = q;
  bs.bc = BoundaryX::Periodic;
  bs.kappa_grid = kappa_grid_uniform(kappa_count);
  bs.energies.resize(q, kappa_count);
  if (want_vectors) bs.eigenvectors.resize(kappa_count);
  bs.labels.assign(kappa_count, std::vector<StateLabel>(q, StateLabel::Bulk));

  parallel_for(kappa_count, [&](long k) {
    double kap = bs.kappa_grid[k];
    Eigen::MatrixXcd M = detail::harper_bloch_matrix(q, alpha, J, kap, kap);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        M, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    bs.energies.col(k) = es.eigenvalues();
    if (want_vectors) bs.eigenvectors[k] = es.eigenvectors();
  });

  Eigen::VectorXd lo =
      detail::hermitian_eigenvalues(detail::harper_bloch_matrix(q, alpha, J, 0.0, 0.0));
  Eigen::VectorXd hi = detail::hermitian_eigenvalues(
      detail::harper_bloch_matrix(q, alpha, J, pi / q, pi / q));
  bs.band_intervals.resize(q);
  for (int nu = 0; nu < q; ++nu)
    bs.band_intervals[nu] = {std::min(lo[nu], hi[nu]),
                             std::max(lo[nu], hi[nu])};
  return bs;
}

/// Gaps between consecutive band intervals, as (lo, hi) pairs; empty pairs
/// (touching bands) are dropped.
inline std::vector<std::pair<double, double>> band_gaps(
    const BandStructure& bands) {
  std::vector<std::pair<double, double>> gaps;
  for (size_t i = 0; i + 1 < bands.band_intervals.size(); ++i) {
    double lo = bands.band_intervals[i].second;
    double hi = bands.band_intervals[i + 1].first;
    if (hi > lo + 1e-12) gaps.push_back({lo, hi});
  }
  return gaps;
}

/// 1D Harper chain over the strip's x-sites at transverse quasimomentum
/// theta: (H b)_l = -J/2 (b_{l+1} + b_{l-1}) - J cos(2 pi alpha l + theta) b_l.
struct HarperChain {
  double J = 1.0;
  double alpha = 0.0;
  int l_min = 0;
  int n = 1;
  BoundaryX bc = BoundaryX::Dirichlet;

  static HarperChain for_strip(const LatticeConfig& cfg) {
    return {cfg.J, cfg.alpha(), cfg.l_min(), cfg.Lx, cfg.bc_x};
  }

  Eigen::VectorXd diagonal(double theta) const {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i)
      d[i] = -J * std::cos(2.0 * pi * alpha * (l_min + i) + theta);
    return d;
  }

  Eigen::MatrixXd dense(double theta) const {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    M.diagonal() = diagonal(theta);
    for (int i = 0; i + 1 < n; ++i) M(i, i + 1) = M(i + 1, i) = -0.5 * J;
    if (bc == BoundaryX::Periodic && n > 2) {
      M(0, n - 1) += -0.5 * J;
      M(n - 1, 0) += -0.5 * J;
    }
    return M;
  }
};

/// Fraction of |b|^2 within `sites` sites of each end of an open chain.
inline std::pair<double, double> edge_weights(const Eigen::VectorXcd& b,
                                              int sites = 3) {
  double wl = 0.0, wr = 0.0, tot = 0.0;
  long n = b.size();
  for (long i = 0; i < n; ++i) {
    double w = std::norm(b[i]);
    tot += w;
    if (i < sites) wl += w;
    if (i >= n - sites) wr += w;
  }
  if (tot == 0.0) return {0.0, 0.0};
  return {wl / tot, wr / tot};
}

inline StateLabel classify_edge(const Eigen::VectorXcd& b, int sites = 3,
                                double threshold = 0.5) {
  auto [wl, wr] = edge_weights(b, sites);
  if (wl >= threshold && wl >= wr) return StateLabel::EdgeLeft;
  if (wr >= threshold) return StateLabel::EdgeRight;
  return StateLabel::Bulk;
}

/// F = 0 spectrum of the strip (finite x, infinite y reduced by the
/// transverse quasimomentum). For Dirichlet x this exhibits the edge states
/// inside the bulk gaps.
inline BandStructure strip_spectrum(int r, int q, double J, int Lx,
                                    int kappa_count, BoundaryX bc_x,
                                    bool want_vectors = true) {
  LatticeConfig tmp;
  tmp.alpha_num = r;
  tmp.alpha_den = q;
  tmp.normalize_alpha();
  if (Lx < 2) throw ConfigError("Lx must be >= 2");

  HarperChain chain{J, tmp.alpha(), -((Lx - 1) / 2), Lx, bc_x};
  BandStructure bs;
  bs.q = tmp.alpha_den;
  bs.bc = bc_x;
  bs.kappa_grid = kappa_grid_uniform(kappa_count);
  bs.energies.resize(Lx, kappa_count);
  bs.eigenvectors.resize(kappa_count);
  bs.labels.assign(kappa_count, std::vector<StateLabel>(Lx, StateLabel::Bulk));

  parallel_for(kappa_count, [&](long k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        chain.dense(bs.kappa_grid[k]));
    bs.energies.col(k) = es.eigenvalues();
    bs.eigenvectors[k] = es.eigenvectors().cast<cxd>();
    if (bc_x == BoundaryX::Dirichlet) {
      for (int nu = 0; nu < Lx; ++nu)
        bs.labels[k][nu] = classify_edge(bs.eigenvectors[k].col(nu));
    }
  });
  return bs;
}

// ---------------------------------------------------------------------------
// 1D Stark-Harper eigenproblem along y at fixed longitudinal quasimomentum:
//   -J/2 (b_{m+1} + b_{m-1}) - J cos(2 pi alpha m - kappa) b_m + F m b_m = E b_m

struct StarkHarperChain {
  double J = 1.0;
  double alpha = 0.0;
  double F = 0.0;
  double kappa = 0.0;
  int m_min = 0;
  int m_max = 0;

  int n() const { return m_max - m_min + 1; }
  Eigen::VectorXd diagonal() const {
    Eigen::VectorXd d(n());
    for (int i = 0; i < n(); ++i) {
      int m = m_min + i;
      d[i] = -J * std::cos(2.0 * pi * alpha * m - kappa) + F * m;
    }
    return d;
  }
  Eigen::VectorXd offdiagonal() const {
    return Eigen::VectorXd::Constant(n() - 1, -0.5 * J);
  }
};

struct StarkLadderState {
  double energy = 0.0;
  double slope = 0.0;
  bool transporting = false;
  Eigen::VectorXd b;  // amplitudes over [m_min, m_max]
  double residual = 0.0;
};

struct StarkLadder {
  double kappa = 0.0;
  int m_min = 0;
  int m_max = 0;
  std::vector<StarkLadderState> states;  // ascending energy
};

namespace detail {

/// Eigenpairs of the Stark-Harper chain with |E - center| <= half_width.
inline void stark_harper_window(const StarkHarperChain& chain, double center,
                                double half_width, Eigen::VectorXd& values,
                                Eigen::MatrixXd& vectors,
                                Eigen::VectorXd& residuals) {
  Eigen::VectorXd diag = chain.diagonal();
  Eigen::VectorXd off = chain.offdiagonal();
  long n = chain.n();
  auto apply_A = [&](const Eigen::VectorXcd& x) {
    Eigen::VectorXcd y(n);
    for (long i = 0; i < n; ++i) {
      cxd acc = diag[i] * x[i];
      if (i > 0) acc += off[i - 1] * x[i - 1];
      if (i + 1 < n) acc += off[i] * x[i + 1];
      y[i] = acc;
    }
    return y;
  };
  // retry with a nudged shift if (T - sigma) is numerically singular
  double sigma = center;
  for (int attempt = 0;; ++attempt) {
    try {
      TridiagShiftSolver solver(diag, off, sigma);
      auto solve = [&](const Eigen::VectorXcd& x) { return solver.solve(x); };
      LanczosOptions opt;
      opt.residual_tol = 5e-11;
      opt.seed = 0x5747a6 + attempt;
      double spacing = std::max(chain.F, 1e-3 * std::max(chain.J, 1.0));
      // Gershgorin: spectrum inside [min(diag) - J, max(diag) + J]
      bool lo_open = (center - half_width) > diag.minCoeff() - chain.J;
      bool hi_open = (center + half_width) < diag.maxCoeff() + chain.J;
      auto res = shift_invert_window(n, solve, apply_A, sigma,
                                     half_width + 0.25 * spacing, opt,
                                     lo_open, hi_open);
      std::vector<int> keep;
      for (int i = 0; i < res.values.size(); ++i)
        if (std::abs(res.values[i] - center) <= half_width) keep.push_back(i);
      values.resize(keep.size());
      vectors.resize(n, keep.size());
      residuals.resize(keep.size());
      for (size_t i = 0; i < keep.size(); ++i) {
        values[i] = res.values[keep[i]];
        residuals[i] = res.residuals[keep[i]];
        // chain is real symmetric: rotate each vector to the real axis
        Eigen::VectorXcd v = res.vectors.col(keep[i]);
        long imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        v *= std::conj(v[imax]) / std::abs(v[imax]);
        vectors.col(i) = v.real();
        vectors.col(i).normalize();
      }
      return;
    } catch (const ConvergenceError&) {
      if (attempt >= 3) throw;
      sigma = center + (attempt + 1) * 0.37 * std::max(chain.F, 1e-6);
    }
  }
}

}  // namespace detail

/// Solve the Stark-Harper ladder near energy `center` (default 0) and
/// identify transporting states by their dispersion slope dE/dkappa.
inline StarkLadder stark_harper_ladder(int r, int q, double J, double F,
                                       double kappa, double energy_center = 0.0,
                                       double energy_half_width = -1.0,
                                       int buffer = LatticeConfig::default_buffer) {
  if (!(F > 0.0)) throw ConfigError("stark_harper_ladder requires F > 0");
  LatticeConfig tmp;
  tmp.alpha_num = r;
  tmp.alpha_den = q;
  tmp.normalize_alpha();
  const double alpha = tmp.alpha();
  if (energy_half_width <= 0.0) energy_half_width = 2.0 * F;

  // site window covering the requested energy window plus the state extent
  int m_lo = static_cast<int>(
      std::floor((energy_center - energy_half_width - 2.0 * J) / F)) - buffer;
  int m_hi = static_cast<int>(
      std::ceil((energy_center + energy_half_width + 2.0 * J) / F)) + buffer;
  StarkHarperChain chain{J, alpha, F, kappa, m_lo, m_hi};

  StarkLadder lad;
  lad.kappa = kappa;
  lad.m_min = m_lo;
  lad.m_max = m_hi;

  Eigen::VectorXd ev, resid;
  Eigen::MatrixXd vec;
  detail::stark_harper_window(chain, energy_center, energy_half_width, ev, vec,
                              resid);

  // central finite difference in kappa for the slopes
  const double dk = 1e-3;
  StarkHarperChain cp = chain, cm = chain;
  cp.kappa = kappa + dk;
  cm.kappa = kappa - dk;
  Eigen::VectorXd evp, evm, rp, rm;
  Eigen::MatrixXd vp, vm;
  detail::stark_harper_window(cp, energy_center, energy_half_width + 4 * dk,
                              evp, vp, rp);
  detail::stark_harper_window(cm, energy_center, energy_half_width + 4 * dk,
                              evm, vm, rm);

  double vstar = alpha > 0.0 ? drift_velocity(alpha, F) : 0.0;
  double fcr = alpha > 0.0 ? critical_field(alpha, J) : 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    StarkLadderState st;
    st.energy = ev[i];
    st.b = vec.col(i);
    st.residual = resid[i];
    if (st.b[0] * st.b[0] + st.b[chain.n() - 1] * st.b[chain.n() - 1] > 1e-16)
      throw TruncationError("Stark-Harper window too small: boundary weight");
    // match by overlap against the shifted-kappa solves
    auto match = [&](const Eigen::MatrixXd& V, const Eigen::VectorXd& E) {
      int best = -1;
      double bo = 0.0;
      for (int j = 0; j < V.cols(); ++j) {
        double o = std::abs(st.b.dot(V.col(j)));
        if (o > bo) {
          bo = o;
          best = j;
        }
      }
      if (best < 0 || bo < 0.5) return std::pair<bool, double>{false, 0.0};
      return std::pair<bool, double>{true, E[best]};
    };
    auto [okp, ep] = match(vp, evp);
    auto [okm, em] = match(vm, evm);
    if (okp && okm) st.slope = (ep - em) / (2.0 * dk);
    st.transporting = alpha > 0.0 && F < fcr && okp && okm &&
                      std::abs(st.slope - vstar) <= 0.2 * vstar;
    lad.states.push_back(std::move(st));
  }
  std::sort(lad.states.begin(), lad.states.end(),
            [](const auto& a, const auto& b) { return a.energy < b.energy; });
  return lad;
}

// ---------------------------------------------------------------------------
// Driven Harper equation (Bloch acceleration theorem)

/// One unitary step of i db/dt = H_harper(kappa0 + dir*F*t) b using the
/// midpoint Magnus rule with an exact matrix exponential. dir = +1 matches
/// the driven-Harper convention kappa' = kappa + F t; the evolution-operator
/// construction for the strip Hamiltonian uses dir = -1 (the force lowers
/// the transverse quasimomentum there).
inline Eigen::VectorXcd driven_harper_step(const Eigen::VectorXcd& b,
                                           double kappa0, double t, double dt,
                                           double alpha, double J, double F,
                                           BoundaryX bc = BoundaryX::Dirichlet,
                                           int l_min = 0, int dir = +1) {
  if (std::abs(F * dt) > 0.01)
    throw ConfigError("driven_harper_step: dt too large, kappa' must change "
                      "by < 0.01 per step");
  HarperChain chain{J, alpha, l_min, static_cast<int>(b.size()), bc};
  double theta = kappa0 + dir * F * (t + 0.5 * dt);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(chain.dense(theta));
  Eigen::VectorXcd phases(b.size());
  for (long i = 0; i < b.size(); ++i)
    phases[i] = std::exp(cxd(0.0, -dt * es.eigenvalues()[i]));
  Eigen::MatrixXcd V = es.eigenvectors().cast<cxd>();
  return V * phases.asDiagonal() * (V.adjoint() * b);
}

/// Fourth-order Magnus step matrix for the same flow; theta_gauss1/2 are
/// the drive phases at the two Gauss nodes t + (1/2 -+ sqrt(3)/6) dt, in
/// time order. Used to assemble Floquet operators.
inline Eigen::MatrixXcd driven_harper_magnus4(const HarperChain& chain,
                                              double theta_gauss1,
                                              double theta_gauss2, double dt) {
  Eigen::MatrixXd A1 = chain.dense(theta_gauss1);
  Eigen::MatrixXd A2 = chain.dense(theta_gauss2);
  Eigen::MatrixXd K = A1 * A2 - A2 * A1;  // real antisymmetric
  Eigen::MatrixXcd M =
      (0.5 * dt * (A1 + A2)).cast<cxd>() +
      ii * (std::sqrt(3.0) / 12.0 * dt * dt) * K.cast<cxd>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M);
  Eigen::VectorXcd phases(M.rows());
  for (long i = 0; i < M.rows(); ++i)
    phases[i] = std::exp(cxd(0.0, -es.eigenvalues()[i]));
  return es.eigenvectors() * phases.asDiagonal() *
         es.eigenvectors().adjoint();
}

}  // namespace starkstrip
