#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <vector>

#include "starkstrip/bands.hpp"
#include "starkstrip/common.hpp"
#include "starkstrip/lattice.hpp"
#include "starkstrip/linalg.hpp"

namespace starkstrip {

/// Eigenstate of the strip Hamiltonian with F > 0. energy is the
/// fundamental-interval representative in (-F/2, F/2]; the full eigenvalue
/// is energy + ladder_index * F.
struct LandauStarkState {
  WaveFunction psi;
  double energy = 0.0;
  int ladder_index = 0;  // n
  int nu = 0;            // 1..Lx, ascending energy in the fundamental interval
  double residual = 0.0;
  double boundary_tail = 0.0;
  double y_mean = 0.0;
  int y_extent = 0;  // support span (sites) at the 1e-3 amplitude cutoff
};

inline double wavefunction_y_mean(const WaveFunction& psi) {
  double acc = 0.0;
  for (int l = psi.cfg.l_min(); l <= psi.cfg.l_max(); ++l)
    for (int m = psi.cfg.m_min; m <= psi.cfg.m_max; ++m)
      acc += m * std::norm(psi.at(l, m));
  return acc;
}

inline int wavefunction_y_extent(const WaveFunction& psi, double cutoff = 1e-3) {
  double peak = psi.amps.cwiseAbs().maxCoeff();
  int lo = psi.cfg.m_max + 1, hi = psi.cfg.m_min - 1;
  for (int m = psi.cfg.m_min; m <= psi.cfg.m_max; ++m) {
    double rowmax = 0.0;
    for (int l = psi.cfg.l_min(); l <= psi.cfg.l_max(); ++l)
      rowmax = std::max(rowmax, std::abs(psi.at(l, m)));
    if (rowmax > cutoff * peak) {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  }
  return hi >= lo ? hi - lo + 1 : 0;
}

namespace detail {

/// Sparse matrix in x-fastest ordering, where the strip is banded with
/// bandwidth Lx; used only behind the shift-invert solver.
inline Eigen::SparseMatrix<cxd> strip_sparse_xfast(const LatticeConfig& cfg) {
  using T = Eigen::Triplet<cxd>;
  const int lx = cfg.Lx, ny = cfg.ny();
  const bool periodic = cfg.bc_x == BoundaryX::Periodic;
  auto idx = [&](int li, int mj) { return static_cast<long>(mj) * lx + li; };
  std::vector<T> trip;
  trip.reserve(5 * cfg.n_sites());
  for (int mj = 0; mj < ny; ++mj) {
    int m = cfg.m_min + mj;
    cxd xhop = -0.5 * cfg.J * std::exp(cxd(0.0, -2.0 * pi * cfg.alpha() * m));
    for (int li = 0; li < lx; ++li) {
      trip.emplace_back(idx(li, mj), idx(li, mj), cxd(cfg.F * m, 0.0));
      if (mj + 1 < ny) {
        trip.emplace_back(idx(li, mj), idx(li, mj + 1), cxd(-0.5 * cfg.J, 0));
        trip.emplace_back(idx(li, mj + 1), idx(li, mj), cxd(-0.5 * cfg.J, 0));
      }
      int lr = li + 1 < lx ? li + 1 : (periodic ? 0 : -1);
      if (lr >= 0 && !(periodic && lx == 2 && lr == li)) {
        trip.emplace_back(idx(li, mj), idx(lr, mj), xhop);
        trip.emplace_back(idx(lr, mj), idx(li, mj), std::conj(xhop));
      }
    }
  }
  Eigen::SparseMatrix<cxd> H(cfg.n_sites(), cfg.n_sites());
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

inline Eigen::VectorXcd to_xfast(const LatticeConfig& cfg,
                                 const Eigen::VectorXcd& v) {
  const int lx = cfg.Lx, ny = cfg.ny();
  Eigen::VectorXcd out(v.size());
  for (int li = 0; li < lx; ++li)
    for (int mj = 0; mj < ny; ++mj)
      out[static_cast<long>(mj) * lx + li] =
          v[static_cast<long>(li) * ny + mj];
  return out;
}

inline Eigen::VectorXcd from_xfast(const LatticeConfig& cfg,
                                   const Eigen::VectorXcd& v) {
  const int lx = cfg.Lx, ny = cfg.ny();
  Eigen::VectorXcd out(v.size());
  for (int li = 0; li < lx; ++li)
    for (int mj = 0; mj < ny; ++mj)
      out[static_cast<long>(li) * ny + mj] =
          v[static_cast<long>(mj) * lx + li];
  return out;
}

}  // namespace detail

struct DiagonalizeOptions {
  double residual_tol = 1e-10;
  double tail_tol = 1e-8;
  int max_iterations = 600;
  std::uint64_t seed = 0x1a5d;
};

/// Direct route: all eigenstates of the strip with energies in the
/// fundamental interval (-F/2, F/2], via shift-invert Lanczos about E = 0.
inline std::vector<LandauStarkState> diagonalize_strip(
    const LatticeConfig& cfg, const DiagonalizeOptions& opt = {}) {
  cfg.validate();
  if (cfg.bc_x != BoundaryX::Dirichlet)
    throw ConfigError("diagonalize_strip expects Dirichlet x-boundaries");
  if (!(cfg.F > 0.0)) throw ConfigError("diagonalize_strip requires F > 0");

  std::vector<LandauStarkState> states;

  if (cfg.J == 0.0) {
    // hopping off: eigenstates are single sites, E = F m; only m = 0 falls
    // in the fundamental interval
    for (int l = cfg.l_min(); l <= cfg.l_max(); ++l) {
      LandauStarkState st;
      st.psi = WaveFunction(cfg);
      st.psi.at(l, 0) = 1.0;
      st.energy = 0.0;
      st.y_mean = 0.0;
      st.y_extent = 1;
      states.push_back(std::move(st));
    }
  } else {
    auto H = build_hamiltonian(cfg);
    Eigen::SparseMatrix<cxd> A = detail::strip_sparse_xfast(cfg);
    SparseShiftSolver solver(A, 0.0);
    auto solve = [&](const Eigen::VectorXcd& v) { return solver.solve(v); };
    auto apply = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
      return A * v;
    };
    LanczosOptions lopt;
    lopt.max_iterations = opt.max_iterations;
    lopt.residual_tol = opt.residual_tol;
    lopt.seed = opt.seed;
    double margin = 2.0 * cfg.F / cfg.Lx;
    auto res = shift_invert_window(cfg.n_sites(), solve, apply, 0.0,
                                   0.5 * cfg.F + margin, lopt);
    for (int i = 0; i < res.values.size(); ++i) {
      double e = res.values[i];
      if (!(e > -0.5 * cfg.F && e <= 0.5 * cfg.F)) continue;
      LandauStarkState st;
      st.psi = WaveFunction(cfg);
      st.psi.amps = detail::from_xfast(cfg, res.vectors.col(i));
      st.psi.normalize();
      st.energy = e;
      st.residual = res.residuals[i];
      st.boundary_tail = st.psi.boundary_tail();
      st.y_mean = wavefunction_y_mean(st.psi);
      st.y_extent = wavefunction_y_extent(st.psi);
      if (st.boundary_tail > opt.tail_tol)
        throw TruncationError(
            "diagonalize_strip: state touches the y-window boundary; "
            "enlarge the window");
      states.push_back(std::move(st));
    }
  }
  std::sort(states.begin(), states.end(),
            [](const auto& a, const auto& b) { return a.energy < b.energy; });
  for (size_t i = 0; i < states.size(); ++i)
    states[i].nu = static_cast<int>(i) + 1;
  return states;
}

/// Translation theorem: Psi'_{l,m} = Psi_{l,m-n} e^{i 2 pi alpha n l} is an
/// eigenstate with energy E + F n.
inline WaveFunction translate_wavefunction(const WaveFunction& psi, int n,
                                           double weight_tol = 1e-12) {
  const LatticeConfig& cfg = psi.cfg;
  WaveFunction out(cfg);
  for (int l = cfg.l_min(); l <= cfg.l_max(); ++l) {
    cxd phase = std::exp(cxd(0.0, 2.0 * pi * cfg.alpha() * n * l));
    for (int m = cfg.m_min; m <= cfg.m_max; ++m) {
      int src = m - n;
      if (src < cfg.m_min || src > cfg.m_max) continue;
      out.at(l, m) = psi.at(l, src) * phase;
    }
  }
  double dropped = psi.amps.squaredNorm() - out.amps.squaredNorm();
  if (dropped > weight_tol)
    throw TruncationError("translate: support does not fit in the window");
  return out;
}

inline LandauStarkState translate_state(const LandauStarkState& st, int n) {
  LandauStarkState out = st;
  out.psi = translate_wavefunction(st.psi, n);
  out.psi.normalize();
  out.ladder_index = st.ladder_index + n;
  out.y_mean = st.y_mean + n;
  auto H = build_hamiltonian(st.psi.cfg);
  double e_full = st.energy + out.ladder_index * st.psi.cfg.F;
  out.residual = (H.apply(out.psi).amps - e_full * out.psi.amps).norm();
  out.boundary_tail = out.psi.boundary_tail();
  return out;
}

/// Eq.-style spatial density: rho_{l,m} = (1/Lx) sum_nu |Psi^{(nu)}_{l,m}|^2.
/// Expects the complete fundamental-interval family (one state per nu).
inline Eigen::MatrixXd spatial_density(
    const std::vector<LandauStarkState>& states) {
  if (states.empty()) throw DimensionError("spatial_density: no states");
  const LatticeConfig& cfg = states[0].psi.cfg;
  if (static_cast<int>(states.size()) != cfg.Lx)
    throw DimensionError("spatial_density expects exactly Lx states");
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(cfg.ny(), cfg.Lx);
  for (const auto& st : states) {
    if (!(st.psi.cfg == cfg))
      throw DimensionError("spatial_density: mixed grids");
    for (int li = 0; li < cfg.Lx; ++li)
      for (int mj = 0; mj < cfg.ny(); ++mj)
        rho(mj, li) +=
            std::norm(st.psi.amps[static_cast<long>(li) * cfg.ny() + mj]);
  }
  rho /= static_cast<double>(cfg.Lx);
  return rho;
}

// ---------------------------------------------------------------------------
// Floquet route

struct FloquetSpectrum {
  Eigen::VectorXd eigenphases;  // (-pi, pi], ordered like the input states
  Eigen::MatrixXcd eigenvectors;
  double period = 0.0;
  double unitarity_error = 0.0;
};

/// One-period Floquet family of the driven 1D chain, computed on a kappa
/// grid aligned with the time grid. With kappa_j - kappa_0 = F * (s j dt)
/// the one-period products at different kappa are exact regroupings of the
/// same step sequence, U_j = C_{N-js} U_0 C_{N-js}^dagger, which makes the
/// flat-band property of the discrete operator family exact and gives a
/// smooth eigenvector family for the Fourier assembly.
struct FloquetFamily {
  LatticeConfig cfg;
  int K = 0;                 // kappa count
  int steps_per_period = 0;  // N = K * s
  Eigen::VectorXd kappa_grid;
  Eigen::VectorXd eigenphases;        // per nu, ascending energy order
  Eigen::VectorXd energies;           // fundamental-interval energies
  std::vector<Eigen::MatrixXcd> b;    // per kappa: columns are b_nu(kappa)
  double unitarity_error = 0.0;
  double phase_step_error = 0.0;      // eigenphase change at the last halving
};

namespace detail {

struct FamilyCore {
  Eigen::MatrixXcd U0;
  std::vector<Eigen::MatrixXcd> checkpoints;  // C_{N-js} for j=0..K-1
  double unitarity_error = 0.0;
};

inline FamilyCore floquet_core(const HarperChain& chain, double F, int K,
                               int s) {
  const double T_B = 2.0 * pi / F;
  const long N = static_cast<long>(K) * s;
  const double h = T_B / N;
  const double c1 = 0.5 - std::sqrt(3.0) / 6.0;
  const double c2 = 0.5 + std::sqrt(3.0) / 6.0;
  const double kappa0 = -pi;
  const int n = chain.n;

  std::vector<Eigen::MatrixXcd> C_at(K);  // C_{js}
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Identity(n, n);
  C_at[0] = C;
  for (long k = 1; k <= N; ++k) {
    double t0 = (k - 1) * h;
    // theta(t) = kappa0 - F t: the force lowers the transverse quasimomentum
    Eigen::MatrixXcd P = driven_harper_magnus4(
        chain, kappa0 - F * (t0 + c1 * h), kappa0 - F * (t0 + c2 * h), h);
    C = P * C;
    if (k % s == 0 && k < N) C_at[k / s] = C;
  }
  FamilyCore core;
  core.U0 = C;
  core.unitarity_error =
      (C * C.adjoint() - Eigen::MatrixXcd::Identity(n, n)).norm();
  // U_j = C_{N-js} U_0 C_{N-js}^dagger; the transports C_{N-js} = C_{(K-j)s}
  // are the stored cumulative products. j = 0 uses the full period C_N so
  // that one uniform dynamical-phase rule covers the whole family.
  core.checkpoints.resize(K);
  core.checkpoints[0] = C;
  for (int j = 1; j < K; ++j) core.checkpoints[j] = C_at[K - j];
  return core;
}

}  // namespace detail

/// Time-ordered one-period evolution operator of the driven chain at a
/// single kappa, with the given number of Magnus-4 steps.
inline Eigen::MatrixXcd floquet_1d_operator(double kappa,
                                            const LatticeConfig& cfg,
                                            long steps) {
  if (!(cfg.F > 0.0)) throw ConfigError("floquet_1d_operator requires F > 0");
  HarperChain chain = HarperChain::for_strip(cfg);
  const double T_B = 2.0 * pi / cfg.F;
  const double h = T_B / steps;
  const double c1 = 0.5 - std::sqrt(3.0) / 6.0;
  const double c2 = 0.5 + std::sqrt(3.0) / 6.0;
  Eigen::MatrixXcd U = Eigen::MatrixXcd::Identity(cfg.Lx, cfg.Lx);
  for (long k = 0; k < steps; ++k) {
    double t0 = k * h;
    U = driven_harper_magnus4(chain, kappa - cfg.F * (t0 + c1 * h),
                              kappa - cfg.F * (t0 + c2 * h), h) *
        U;
  }
  return U;
}

/// Eigenphases of a unitary matrix in (-pi, pi], ascending by the energy
/// they map to (E = -phase / T_B folded into the fundamental interval).
inline void unitary_eigensystem(const Eigen::MatrixXcd& U, double F,
                                Eigen::VectorXd& phases,
                                Eigen::VectorXd& energies,
                                Eigen::MatrixXcd& vectors) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(U);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("unitary eigendecomposition failed");
  const long n = U.rows();
  const double T_B = 2.0 * pi / F;
  std::vector<int> order(n);
  Eigen::VectorXd ph(n), en(n);
  for (long i = 0; i < n; ++i) {
    ph[i] = std::arg(es.eigenvalues()[i]);
    en[i] = fold_to_fundamental(-ph[i] / T_B, F);
    order[i] = static_cast<int>(i);
  }
  std::sort(order.begin(), order.end(),
            [&](int a, int bi) { return en[a] < en[bi]; });
  phases.resize(n);
  energies.resize(n);
  vectors.resize(n, n);
  for (long i = 0; i < n; ++i) {
    phases[i] = ph[order[i]];
    energies[i] = en[order[i]];
    vectors.col(i) = es.eigenvectors().col(order[i]);
  }
}

/// Build the phase-aligned Floquet family; steps per period are doubled
/// until the eigenphases move by less than phase_tol.
inline FloquetFamily build_floquet_family(const LatticeConfig& cfg, int K = 256,
                                          double phase_tol = 1e-8,
                                          int s_initial = 4, int s_max = 512) {
  cfg.validate();
  if (!(cfg.F > 0.0)) throw ConfigError("Floquet family requires F > 0");
  HarperChain chain = HarperChain::for_strip(cfg);

  FloquetFamily fam;
  fam.cfg = cfg;
  fam.K = K;
  fam.kappa_grid = kappa_grid_uniform(K);

  Eigen::VectorXd prev_phases;
  detail::FamilyCore core;
  int s = s_initial;
  double step_err = 0.0;
  for (;; s *= 2) {
    core = detail::floquet_core(chain, cfg.F, K, s);
    Eigen::VectorXd phases, energies;
    Eigen::MatrixXcd vecs;
    unitary_eigensystem(core.U0, cfg.F, phases, energies, vecs);
    if (prev_phases.size() > 0) {
      step_err = 0.0;
      for (long i = 0; i < phases.size(); ++i) {
        double d = std::abs(fold_phase(phases[i] - prev_phases[i]));
        step_err = std::max(step_err, d);
      }
      if (step_err < phase_tol) {
        fam.steps_per_period = K * s;
        fam.eigenphases = phases;
        fam.energies = energies;
        fam.phase_step_error = step_err;
        fam.unitarity_error = core.unitarity_error;
        // eigenvector family by the similarity transport
        fam.b.resize(K);
        for (int j = 0; j < K; ++j) fam.b[j] = core.checkpoints[j] * vecs;
        break;
      }
    }
    prev_phases = phases;
    if (s >= s_max)
      throw ConvergenceError("Floquet family: steps-per-period limit reached "
                             "before eigenphase convergence");
  }

  // Per-column gauge: the Fourier assembly needs the family that solves the
  // kappa-space transport equation d c/d kappa = (i/F)(H_1D(kappa) - E) c.
  // The similarity transport supplies the H part; the scalar dynamical
  // counter-phase e^{-i E kappa / F} supplies the rest. With lambda =
  // e^{-i E T_B} the loop closes exactly, so no seam correction is needed.
  for (int nu = 0; nu < cfg.Lx; ++nu) {
    double e_nu = fam.energies[nu];
    for (int j = 0; j < fam.K; ++j)
      fam.b[j].col(nu) *=
          std::exp(cxd(0.0, -e_nu * fam.kappa_grid[j] / cfg.F));
  }
  return fam;
}

/// Fourier assembly of a 2D Landau-Stark state from the Floquet family
/// (the gauge factor e^{i 2 pi alpha l m} restores the strip gauge):
///   Psi_{l,m} = (1/K) sum_j u^{i 2 pi alpha l m} e^{i kappa_j (m-n)} b_l(kappa_j)
struct AssembleResult {
  LandauStarkState state;
  double aliasing_mass = 0.0;  // weight beyond the K-periodic unit cell
};

inline AssembleResult assemble_landau_stark(const FloquetFamily& fam, int nu,
                                            int n_target) {
  const LatticeConfig& cfg = fam.cfg;
  const int K = fam.K, lx = cfg.Lx;
  if (nu < 1 || nu > lx) throw DimensionError("assemble: nu out of range");

  // per-l DFT of the aligned family; profile(x) with x = m - n, K-periodic
  Eigen::MatrixXcd profile(lx, K);
  for (int li = 0; li < lx; ++li) {
    for (int x = 0; x < K; ++x) {
      cxd acc = 0.0;
      for (int j = 0; j < K; ++j) {
        double phase = fam.kappa_grid[j] * x;
        acc += fam.b[j](li, nu - 1) * std::exp(cxd(0.0, phase));
      }
      profile(li, x) = acc / static_cast<double>(K);
    }
  }

  auto build = [&](int n) {
    WaveFunction psi(cfg);
    double aliased = 0.0;
    for (int li = 0; li < lx; ++li) {
      int l = cfg.l_min() + li;
      for (int mj = 0; mj < cfg.ny(); ++mj) {
        int m = cfg.m_min + mj;
        int x = m - n;
        if (x < -K / 2 || x >= K - K / 2) {
          // outside the K-periodic unit cell: would alias, track the mass
          int xw = ((x % K) + K) % K;
          aliased += std::norm(profile(li, xw));
          continue;
        }
        int xw = ((x % K) + K) % K;
        cxd gauge = std::exp(cxd(0.0, 2.0 * pi * cfg.alpha() * l * m));
        psi.at(l, m) = gauge * profile(li, xw);
      }
    }
    double nn = psi.norm();
    if (nn == 0.0) throw ConvergenceError("assemble: empty state");
    psi.amps /= nn;
    return std::pair<WaveFunction, double>(std::move(psi), aliased / (nn * nn));
  };

  auto H = build_hamiltonian(cfg);
  double e_fund = fam.energies[nu - 1];
  auto [psi, aliased] = build(n_target);
  double e_raw = psi.amps.dot(H.apply(psi).amps).real();
  int w = static_cast<int>(std::lround((e_raw - (e_fund + n_target * cfg.F)) /
                                       cfg.F));
  if (w != 0) {
    auto rebuilt = build(n_target - w);
    psi = std::move(rebuilt.first);
    aliased = rebuilt.second;
  }

  AssembleResult out;
  out.aliasing_mass = aliased;
  out.state.psi = std::move(psi);
  out.state.energy = e_fund;
  out.state.ladder_index = n_target;
  out.state.nu = nu;
  double e_full = e_fund + n_target * cfg.F;
  out.state.residual =
      (H.apply(out.state.psi).amps - e_full * out.state.psi.amps).norm();
  out.state.boundary_tail = out.state.psi.boundary_tail();
  out.state.y_mean = wavefunction_y_mean(out.state.psi);
  out.state.y_extent = wavefunction_y_extent(out.state.psi);
  return out;
}

/// Floquet-route Landau-Stark states for the whole fundamental interval.
inline std::vector<LandauStarkState> floquet_landau_stark(
    const FloquetFamily& fam, int n_target = 0) {
  std::vector<LandauStarkState> states;
  states.reserve(fam.cfg.Lx);
  for (int nu = 1; nu <= fam.cfg.Lx; ++nu)
    states.push_back(assemble_landau_stark(fam, nu, n_target).state);
  return states;
}

// ---------------------------------------------------------------------------
// Bloch-period evolution operator of the full strip

struct BlochPeriodOptions {
  double unitarity_tol = 1e-6;
  double krylov_tol = 1e-12;
};

/// Apply U = exp(-i H T_B) to the fundamental-interval states and read the
/// eigenphases off the returned phases; the diagonal-overlap moduli certify
/// that the states are eigenvectors of U.
inline FloquetSpectrum bloch_period_operator(
    const LatticeConfig& cfg, const std::vector<LandauStarkState>& states,
    const BlochPeriodOptions& opt = {}) {
  if (states.empty()) throw DimensionError("bloch_period_operator: no states");
  auto H = build_hamiltonian(cfg);
  auto [lo, hi] = H.spectral_bounds();
  const double T_B = 2.0 * pi / cfg.F;

  FloquetSpectrum out;
  out.period = T_B;
  out.eigenphases.resize(states.size());
  out.eigenvectors.resize(cfg.n_sites(), states.size());
  std::vector<double> phases(states.size()), errs(states.size());
  parallel_for(static_cast<long>(states.size()), [&](long i) {
    Eigen::VectorXcd v = states[i].psi.amps;
    chebyshev_propagate([&](const cxd* in, cxd* outp) { H.apply_raw(in, outp); },
                        cfg.n_sites(), lo, hi, T_B, v);
    cxd z = states[i].psi.amps.dot(v);
    phases[i] = std::arg(z);
    errs[i] = std::max(std::abs(1.0 - std::abs(z)), std::abs(1.0 - v.norm()));
    out.eigenvectors.col(i) = states[i].psi.amps;
  });
  double worst = 0.0;
  for (size_t i = 0; i < states.size(); ++i) {
    out.eigenphases[i] = phases[i];
    worst = std::max(worst, errs[i]);
  }
  out.unitarity_error = worst;
  if (worst > opt.unitarity_tol)
    throw ConvergenceError("bloch_period_operator: propagation drift above "
                           "tolerance");
  return out;
}

// ---------------------------------------------------------------------------
// Route comparison

struct RouteMatch {
  std::vector<int> pairing;   // direct index -> floquet index
  Eigen::VectorXd overlaps;   // |<direct|floquet>| per direct state
  Eigen::VectorXd phase_err;  // |eigenphase difference| per direct state
};

/// Greedy maximal-overlap bipartite matching (descending overlap), verified
/// one-to-one. Chaotic spectra have near-degeneracies, so energy order alone
/// is not a safe pairing.
inline RouteMatch match_routes(const std::vector<LandauStarkState>& direct,
                               const std::vector<LandauStarkState>& floquet,
                               double F) {
  const int n = static_cast<int>(direct.size());
  if (static_cast<int>(floquet.size()) != n)
    throw DimensionError("match_routes: state count mismatch");
  Eigen::MatrixXd ov(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      ov(i, j) = std::abs(inner(direct[i].psi, floquet[j].psi));

  RouteMatch match;
  match.pairing.assign(n, -1);
  std::vector<bool> used(n, false);
  for (int pick = 0; pick < n; ++pick) {
    int bi = -1, bj = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (match.pairing[i] >= 0) continue;
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        if (ov(i, j) > best) {
          best = ov(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    match.pairing[bi] = bj;
    used[bj] = true;
  }
  const double T_B = 2.0 * pi / F;
  match.overlaps.resize(n);
  match.phase_err.resize(n);
  for (int i = 0; i < n; ++i) {
    int j = match.pairing[i];
    match.overlaps[i] = ov(i, j);
    double pd = fold_phase(-direct[i].energy * T_B) -
                fold_phase(-floquet[j].energy * T_B);
    match.phase_err[i] = std::abs(fold_phase(pd));
  }
  return match;
}

}  // namespace starkstrip
