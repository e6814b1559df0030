#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <numeric>
#include <optional>
#include <string>

#include "starkstrip/common.hpp"

namespace starkstrip {

enum class BoundaryX { Periodic, Dirichlet };

inline std::string to_string(BoundaryX bc) {
  return bc == BoundaryX::Periodic ? "periodic" : "dirichlet";
}

/// Strip lattice in the Landau gauge: Peierls phase alpha = r/q on the
/// x-hoppings, linear potential F*m along y. x is a finite strip of Lx
/// sites (periodic or open), y is truncated to the window [m_min, m_max]
/// with open ends.
struct LatticeConfig {
  int alpha_num = 0;  ///< r
  int alpha_den = 1;  ///< q
  double J = 1.0;     ///< hopping energy
  double F = 0.0;     ///< electric field (energy per site)
  int Lx = 2;
  int m_min = 0;
  int m_max = 0;
  BoundaryX bc_x = BoundaryX::Dirichlet;

  double alpha() const {
    return static_cast<double>(alpha_num) / static_cast<double>(alpha_den);
  }
  /// Open-strip site range: -Lx/2 < l <= Lx/2.
  int l_min() const { return -((Lx - 1) / 2); }
  int l_max() const { return l_min() + Lx - 1; }
  int ny() const { return m_max - m_min + 1; }
  long n_sites() const { return static_cast<long>(Lx) * ny(); }

  /// Flattened index, y varies fastest. This ordering is fixed; all
  /// serialized amplitude arrays use it.
  long index_of(int l, int m) const {
    return static_cast<long>(l - l_min()) * ny() + (m - m_min);
  }

  /// Reduce alpha to lowest terms with 0 <= alpha < 1.
  void normalize_alpha() {
    if (alpha_den <= 0) throw ConfigError("alpha denominator must be >= 1");
    if (alpha_num < 0) throw ConfigError("alpha must be >= 0");
    alpha_num %= alpha_den;
    int g = std::gcd(alpha_num == 0 ? alpha_den : alpha_num, alpha_den);
    alpha_num /= g;
    alpha_den /= g;
  }

  void validate() const {
    if (alpha_den < 1 || alpha_num < 0 || alpha_num >= alpha_den)
      throw ConfigError("alpha must be rational with 0 <= r/q < 1");
    if (std::gcd(alpha_num == 0 ? 1 : alpha_num, alpha_den) != 1)
      throw ConfigError("alpha not in lowest terms; call normalize_alpha()");
    if (J < 0.0) throw ConfigError("J must be >= 0");
    if (F < 0.0) throw ConfigError("F must be >= 0");
    if (Lx < 2) throw ConfigError("Lx must be >= 2");
    if (m_max < m_min) throw ConfigError("empty y-window");
    if (F > 0.0 && ny() < min_window_sites(J, F))
      throw ConfigError("y-window too small for F: need at least " +
                        std::to_string(min_window_sites(J, F)) + " sites");
  }

  /// Eigenstates extend ~4J/F sites along y, so the window must span at
  /// least 8J/F plus a buffer on both ends.
  static int min_window_sites(double J, double F) {
    return static_cast<int>(std::ceil(8.0 * J / F)) + 2 * default_min_buffer;
  }
  static constexpr int default_min_buffer = 10;
  static constexpr int default_buffer = 20;

  /// Window of half-width ceil(4J/F) + buffer centered on y0.
  static LatticeConfig make(int r, int q, double J, double F, int Lx,
                            BoundaryX bc, int y_center = 0,
                            int buffer = default_buffer) {
    LatticeConfig c;
    c.alpha_num = r;
    c.alpha_den = q;
    c.normalize_alpha();
    c.J = J;
    c.F = F;
    c.Lx = Lx;
    c.bc_x = bc;
    if (F <= 0.0)
      throw ConfigError("automatic y-window requires F > 0; set the window "
                        "explicitly for F = 0");
    int half = static_cast<int>(std::ceil(4.0 * J / F)) + buffer;
    c.m_min = y_center - half;
    c.m_max = y_center + half;
    c.validate();
    return c;
  }

  bool operator==(const LatticeConfig&) const = default;
};

/// Complex amplitudes over the configured grid.
struct WaveFunction {
  LatticeConfig cfg;
  Eigen::VectorXcd amps;

  WaveFunction() = default;
  explicit WaveFunction(const LatticeConfig& c)
      : cfg(c), amps(Eigen::VectorXcd::Zero(c.n_sites())) {}

  cxd& at(int l, int m) { return amps[cfg.index_of(l, m)]; }
  cxd at(int l, int m) const { return amps[cfg.index_of(l, m)]; }

  double norm() const { return amps.norm(); }
  void normalize() {
    double n = norm();
    if (n == 0.0) throw DimensionError("cannot normalize the zero vector");
    amps /= n;
  }

  /// Largest |amplitude| on the outermost y-rows; the truncation guard.
  double boundary_tail() const {
    double tail = 0.0;
    for (int l = cfg.l_min(); l <= cfg.l_max(); ++l) {
      tail = std::max(tail, std::abs(at(l, cfg.m_min)));
      tail = std::max(tail, std::abs(at(l, cfg.m_max)));
    }
    return tail;
  }
};

inline cxd inner(const WaveFunction& a, const WaveFunction& b) {
  if (a.amps.size() != b.amps.size())
    throw DimensionError("inner product on mismatched grids");
  return a.amps.dot(b.amps);  // conjugates the left factor
}

/// Tight-binding Hamiltonian of the strip:
///   (H psi)_{l,m} = -J/2 (e^{-i 2 pi alpha m} psi_{l+1,m}
///                       + e^{+i 2 pi alpha m} psi_{l-1,m})
///                 - J/2 (psi_{l,m+1} + psi_{l,m-1}) + F m psi_{l,m}
/// Immutable after construction; apply() is pure and thread-safe.
class HamiltonianOperator {
 public:
  explicit HamiltonianOperator(const LatticeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int ny = cfg_.ny();
    xhop_.resize(ny);
    diag_.resize(ny);
    for (int j = 0; j < ny; ++j) {
      int m = cfg_.m_min + j;
      xhop_[j] = -0.5 * cfg_.J *
                 std::exp(cxd(0.0, -2.0 * pi * cfg_.alpha() * m));
      diag_[j] = cfg_.F * m;
    }
  }

  const LatticeConfig& config() const { return cfg_; }

  /// out = H in. Raw-pointer kernel; both arrays have n_sites entries in
  /// the standard flattening.
  void apply_raw(const cxd* in, cxd* out) const {
    const int ny = cfg_.ny();
    const int lx = cfg_.Lx;
    const double yhop = -0.5 * cfg_.J;
    const bool periodic = cfg_.bc_x == BoundaryX::Periodic;
    for (int li = 0; li < lx; ++li) {
      const cxd* col = in + static_cast<long>(li) * ny;
      cxd* o = out + static_cast<long>(li) * ny;
      const cxd* right = (li + 1 < lx) ? col + ny
                         : (periodic ? in : nullptr);
      const cxd* left = (li > 0) ? col - ny
                        : (periodic ? in + static_cast<long>(lx - 1) * ny
                                    : nullptr);
      for (int j = 0; j < ny; ++j) {
        cxd acc = diag_[j] * col[j];
        if (j + 1 < ny) acc += yhop * col[j + 1];
        if (j > 0) acc += yhop * col[j - 1];
        if (right) acc += xhop_[j] * right[j];
        if (left) acc += std::conj(xhop_[j]) * left[j];
        o[j] = acc;
      }
    }
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& in) const {
    if (in.size() != cfg_.n_sites())
      throw DimensionError("Hamiltonian applied to vector of wrong size");
    Eigen::VectorXcd out(in.size());
    apply_raw(in.data(), out.data());
    return out;
  }

  WaveFunction apply(const WaveFunction& psi) const {
    if (!(psi.cfg == cfg_))
      throw DimensionError("Hamiltonian applied to mismatched grid");
    WaveFunction out(cfg_);
    out.amps = apply(psi.amps);
    return out;
  }

  /// Gershgorin bounds on the spectrum.
  std::pair<double, double> spectral_bounds() const {
    double hop = 2.0 * cfg_.J;  // four hops of magnitude J/2
    return {cfg_.F * cfg_.m_min - hop, cfg_.F * cfg_.m_max + hop};
  }

  Eigen::SparseMatrix<cxd> sparse() const {
    using T = Eigen::Triplet<cxd>;
    std::vector<T> trip;
    trip.reserve(5 * cfg_.n_sites());
    const bool periodic = cfg_.bc_x == BoundaryX::Periodic;
    for (int l = cfg_.l_min(); l <= cfg_.l_max(); ++l) {
      for (int m = cfg_.m_min; m <= cfg_.m_max; ++m) {
        long i = cfg_.index_of(l, m);
        trip.emplace_back(i, i, cxd(diag_[m - cfg_.m_min], 0.0));
        if (m + 1 <= cfg_.m_max)
          trip.emplace_back(i, cfg_.index_of(l, m + 1), cxd(-0.5 * cfg_.J, 0));
        if (m - 1 >= cfg_.m_min)
          trip.emplace_back(i, cfg_.index_of(l, m - 1), cxd(-0.5 * cfg_.J, 0));
        int lr = l + 1, ll = l - 1;
        if (lr > cfg_.l_max() && periodic) lr = cfg_.l_min();
        if (ll < cfg_.l_min() && periodic) ll = cfg_.l_max();
        if (lr <= cfg_.l_max())
          trip.emplace_back(i, cfg_.index_of(lr, m), xhop_[m - cfg_.m_min]);
        if (ll >= cfg_.l_min())
          trip.emplace_back(i, cfg_.index_of(ll, m),
                            std::conj(xhop_[m - cfg_.m_min]));
      }
    }
    Eigen::SparseMatrix<cxd> H(cfg_.n_sites(), cfg_.n_sites());
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
  }

  static constexpr long dense_site_limit = 50000;

  Eigen::MatrixXcd dense() const {
    if (cfg_.n_sites() > dense_site_limit)
      throw DimensionError("dense Hamiltonian requested above the size cap");
    return Eigen::MatrixXcd(sparse());
  }

 private:
  LatticeConfig cfg_;
  std::vector<cxd> xhop_;    // per m: coefficient of psi_{l+1,m}
  std::vector<double> diag_; // per m: F*m
};

inline HamiltonianOperator build_hamiltonian(const LatticeConfig& cfg) {
  return HamiltonianOperator(cfg);
}

}  // namespace starkstrip
