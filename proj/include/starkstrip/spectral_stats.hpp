#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "starkstrip/common.hpp"
#include "starkstrip/landau_stark.hpp"

namespace starkstrip {

struct SpectrumFlow {
  Eigen::VectorXd F_grid;
  Eigen::MatrixXd energies;  // (F index, nu), fundamental interval
  int Lx = 0;
};

/// Fundamental-interval eigenphases at one field value, certified by step
/// doubling. The 1D Floquet bands are flat, so a single kappa suffices.
inline Eigen::VectorXd fundamental_energies(int r, int q, double J, int Lx,
                                            BoundaryX bc, double F,
                                            double phase_tol = 1e-9,
                                            long steps0 = 256) {
  LatticeConfig cfg;
  cfg.alpha_num = r;
  cfg.alpha_den = q;
  cfg.normalize_alpha();
  cfg.J = J;
  cfg.F = F;
  cfg.Lx = Lx;
  cfg.bc_x = bc;
  cfg.m_min = 0;
  cfg.m_max = 1;  // unused by the 1D route

  Eigen::VectorXd prev;
  for (long steps = steps0;; steps *= 2) {
    Eigen::MatrixXcd U = floquet_1d_operator(-pi, cfg, steps);
    Eigen::VectorXd ph, en;
    Eigen::MatrixXcd vec;
    unitary_eigensystem(U, F, ph, en, vec);
    if (prev.size() > 0) {
      double worst = 0.0;
      for (long i = 0; i < ph.size(); ++i)
        worst = std::max(worst,
                         std::abs(fold_phase(ph[i] - prev[i])));
      if (worst < phase_tol) return en;
    }
    prev = ph;
    if (steps > (1L << 22))
      throw ConvergenceError("fundamental_energies: no step convergence");
  }
}

/// Eigenphase flow of the Bloch-period operator versus F (the level
/// spaghetti of the chaotic strip).
inline SpectrumFlow spectrum_flow(int r, int q, double J, int Lx, BoundaryX bc,
                                  const std::vector<double>& F_grid) {
  // the transporting regime bound applies whenever it exists (J = 0 is the
  // degenerate-ladder control and has no critical field)
  if (r > 0 && J > 0.0) {
    double fcr = critical_field(static_cast<double>(r) / q, J);
    for (double F : F_grid)
      if (F >= fcr)
        throw ConfigError("spectrum_flow: F values must lie in (0, F_cr)");
  }
  for (double F : F_grid)
    if (!(F > 0.0))
      throw ConfigError("spectrum_flow: F values must be positive");
  SpectrumFlow flow;
  flow.Lx = Lx;
  flow.F_grid.resize(F_grid.size());
  flow.energies.resize(F_grid.size(), Lx);
  std::vector<Eigen::VectorXd> rows(F_grid.size());
  parallel_for(static_cast<long>(F_grid.size()), [&](long i) {
    rows[i] = fundamental_energies(r, q, J, Lx, bc, F_grid[i]);
  });
  for (size_t i = 0; i < F_grid.size(); ++i) {
    flow.F_grid[i] = F_grid[i];
    flow.energies.row(i) = rows[i];
  }
  return flow;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor spacing statistics

struct SpacingStatistics {
  std::vector<double> spacings;  // unfolded, unit mean
  Eigen::VectorXd hist_centers;
  Eigen::VectorXd hist_density;  // normalized to unit integral
  double ks_wigner_dyson = 0.0;
  double ks_poisson = 0.0;
  double mean_gap_ratio = 0.0;
  int n_spacings = 0;
};

inline double wigner_dyson_cdf(double s) {
  return 1.0 - std::exp(-0.25 * pi * s * s);
}
inline double poisson_cdf(double s) { return 1.0 - std::exp(-s); }
inline double wigner_dyson_pdf(double s) {
  return 0.5 * pi * s * std::exp(-0.25 * pi * s * s);
}
/// Inverse-CDF sampler for the Wigner-Dyson surmise.
inline double wigner_dyson_quantile(double u) {
  return std::sqrt(-4.0 * std::log(1.0 - u) / pi);
}

inline double ks_distance(std::vector<double> samples,
                          double (*cdf)(double)) {
  std::sort(samples.begin(), samples.end());
  double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    d = std::max(d, std::abs((i + 1) / n - f));
    d = std::max(d, std::abs(i / n - f));
  }
  return d;
}

struct UnfoldOptions {
  int window = 7;  // sliding local-mean window (spacings)
  int bins = 40;
  double hist_max = 4.0;
  int min_spacings = 500;
};

/// Local unfolding (divide by the running mean spacing), pooled across the
/// level sets, renormalized to unit mean, plus Kolmogorov-Smirnov distances
/// against the Wigner-Dyson and Poisson references and the unfolding-free
/// mean gap ratio.
inline SpacingStatistics unfold_and_spacings(
    const std::vector<std::vector<double>>& level_sets,
    const UnfoldOptions& opt = {}) {
  SpacingStatistics st;
  double r_acc = 0.0;
  long r_count = 0;
  for (const auto& set_in : level_sets) {
    std::vector<double> levels = set_in;
    std::sort(levels.begin(), levels.end());
    if (levels.size() < 3) continue;
    std::vector<double> raw(levels.size() - 1);
    for (size_t i = 0; i + 1 < levels.size(); ++i)
      raw[i] = levels[i + 1] - levels[i];
    // gap ratios from the raw spacings
    for (size_t i = 0; i + 1 < raw.size(); ++i) {
      double lo = std::min(raw[i], raw[i + 1]);
      double hi = std::max(raw[i], raw[i + 1]);
      if (hi > 0.0) {
        r_acc += lo / hi;
        ++r_count;
      }
    }
    // local unfolding
    int w = opt.window;
    int n = static_cast<int>(raw.size());
    for (int i = 0; i < n; ++i) {
      int lo = std::max(0, i - w / 2);
      int hi = std::min(n - 1, i + w / 2);
      double mean = 0.0;
      for (int j = lo; j <= hi; ++j) mean += raw[j];
      mean /= (hi - lo + 1);
      if (mean > 0.0) st.spacings.push_back(raw[i] / mean);
    }
  }
  if (static_cast<int>(st.spacings.size()) < opt.min_spacings)
    throw ConfigError("unfold_and_spacings: need at least " +
                      std::to_string(opt.min_spacings) + " spacings");
  // windowed local means bias the global mean upward by ~cv^2/w; one global
  // rescale restores unit mean exactly
  double mean = 0.0;
  for (double s : st.spacings) mean += s;
  mean /= st.spacings.size();
  for (double& s : st.spacings) s /= mean;

  st.n_spacings = static_cast<int>(st.spacings.size());
  st.mean_gap_ratio = r_count > 0 ? r_acc / r_count : 0.0;
  st.ks_wigner_dyson = ks_distance(st.spacings, &wigner_dyson_cdf);
  st.ks_poisson = ks_distance(st.spacings, &poisson_cdf);

  st.hist_centers.resize(opt.bins);
  st.hist_density = Eigen::VectorXd::Zero(opt.bins);
  double bw = opt.hist_max / opt.bins;
  for (int b = 0; b < opt.bins; ++b) st.hist_centers[b] = (b + 0.5) * bw;
  long inside = 0;
  for (double s : st.spacings) {
    int b = static_cast<int>(s / bw);
    if (b >= 0 && b < opt.bins) {
      st.hist_density[b] += 1.0;
      ++inside;
    }
  }
  if (inside > 0) st.hist_density /= st.n_spacings * bw;
  return st;
}

/// Spacing statistics of the strip pooled over an F grid; each field value
/// contributes one slice of Lx levels to the histogram.
inline SpacingStatistics strip_spacing_statistics(
    int r, int q, double J, int Lx, BoundaryX bc,
    const std::vector<double>& F_grid, const UnfoldOptions& opt = {}) {
  auto flow = spectrum_flow(r, q, J, Lx, bc, F_grid);
  std::vector<std::vector<double>> sets;
  for (long i = 0; i < flow.F_grid.size(); ++i) {
    std::vector<double> levels(Lx);
    for (int nu = 0; nu < Lx; ++nu)
      levels[nu] = flow.energies(i, nu) / F_grid[i];  // unit-ladder scale
    sets.push_back(std::move(levels));
  }
  return unfold_and_spacings(sets, opt);
}

inline std::vector<double> uniform_grid(double lo, double hi, int count) {
  std::vector<double> g(count);
  for (int i = 0; i < count; ++i)
    g[i] = lo + (hi - lo) * (count == 1 ? 0.5 : static_cast<double>(i) /
                                                   (count - 1));
  return g;
}

}  // namespace starkstrip
