#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <functional>
#include <vector>

#include "starkstrip/common.hpp"

namespace starkstrip {

/// Full eigensolve of a real symmetric tridiagonal matrix.
/// diag has n entries, offdiag n-1.
inline void tridiag_eig(const Eigen::VectorXd& diag,
                        const Eigen::VectorXd& offdiag,
                        Eigen::VectorXd& values, Eigen::MatrixXd& vectors,
                        bool want_vectors = true) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, offdiag,
                            want_vectors ? Eigen::ComputeEigenvectors
                                         : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("tridiagonal eigensolver failed");
  values = es.eigenvalues();
  if (want_vectors) vectors = es.eigenvectors();
}

/// LU solver for (T - sigma) with T real symmetric tridiagonal, partial
/// pivoting. Used as the shift-invert backend for 1D chain problems.
class TridiagShiftSolver {
 public:
  TridiagShiftSolver(const Eigen::VectorXd& diag,
                     const Eigen::VectorXd& offdiag, double sigma) {
    n_ = diag.size();
    // banded LU with row pivoting needs two superdiagonals
    d0_.resize(n_);
    d1_.resize(n_ > 1 ? n_ - 1 : 0);
    d2_.resize(n_ > 2 ? n_ - 2 : 0);
    low_.resize(n_ > 1 ? n_ - 1 : 0);
    piv_.resize(n_ > 1 ? n_ - 1 : 0);
    for (long i = 0; i < n_; ++i) d0_[i] = diag[i] - sigma;
    for (long i = 0; i + 1 < n_; ++i) d1_[i] = offdiag[i];
    std::fill(d2_.begin(), d2_.end(), 0.0);
    Eigen::VectorXd sub = offdiag;
    for (long k = 0; k + 1 < n_; ++k) {
      double a = d0_[k], b = sub[k];
      bool swap = std::abs(b) > std::abs(a);
      piv_[k] = swap;
      if (swap) {
        std::swap(d0_[k], sub[k]);
        double t = d1_[k];
        d1_[k] = d0_[k + 1];
        d0_[k + 1] = t;
        if (k + 2 < n_) {
          d2_[k] = d1_[k + 1];
          d1_[k + 1] = 0.0;
        }
      }
      if (d0_[k] == 0.0) throw ConvergenceError("singular shifted tridiagonal");
      double m = sub[k] / d0_[k];
      low_[k] = m;
      d0_[k + 1] -= m * d1_[k];
      if (k + 2 < n_) d1_[k + 1] -= m * d2_[k];
    }
    if (d0_[n_ - 1] == 0.0)
      throw ConvergenceError("singular shifted tridiagonal");
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const {
    Eigen::VectorXcd x = rhs;
    for (long k = 0; k + 1 < n_; ++k) {
      if (piv_[k]) std::swap(x[k], x[k + 1]);
      x[k + 1] -= low_[k] * x[k];
    }
    for (long k = n_ - 1; k >= 0; --k) {
      cxd acc = x[k];
      if (k + 1 < n_) acc -= d1_[k] * x[k + 1];
      if (k + 2 < n_) acc -= d2_[k] * x[k + 2];
      x[k] = acc / d0_[k];
    }
    return x;
  }

 private:
  long n_ = 0;
  std::vector<double> d0_, d1_, d2_, low_;
  std::vector<char> piv_;
};

/// Shift-invert backend for sparse Hermitian matrices via SparseLU.
class SparseShiftSolver {
 public:
  SparseShiftSolver(const Eigen::SparseMatrix<cxd>& A, double sigma) {
    Eigen::SparseMatrix<cxd> shifted = A;
    for (int k = 0; k < shifted.outerSize(); ++k)
      shifted.coeffRef(k, k) -= sigma;
    shifted.makeCompressed();
    lu_.compute(shifted);
    if (lu_.info() != Eigen::Success)
      throw ConvergenceError("sparse LU factorization failed");
  }
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const {
    return lu_.solve(rhs);
  }

 private:
  Eigen::SparseLU<Eigen::SparseMatrix<cxd>, Eigen::COLAMDOrdering<int>> lu_;
};

struct WindowEigResult {
  Eigen::VectorXd values;    // ascending
  Eigen::MatrixXcd vectors;  // orthonormal columns
  Eigen::VectorXd residuals; // ||A x - E x|| per pair
};

struct LanczosOptions {
  int max_iterations = 400;
  int min_iterations = 20;
  int check_every = 8;
  double ritz_tol = 1e-12;
  double residual_tol = 1e-10;
  std::uint64_t seed = 0x5e11c0de;
};

/// All eigenpairs of a Hermitian operator with |E - sigma| <= half_width,
/// by shift-invert Lanczos with full reorthogonalization.
///
/// solve must apply (A - sigma)^{-1}; apply_A applies A and is used for
/// Rayleigh refinement and residual certification. bracket_lo/hi tell the
/// convergence test whether spectrum exists beyond the window edge on that
/// side (pass false when the window already covers that end of the
/// spectrum).
inline WindowEigResult shift_invert_window(
    long n, const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& solve,
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply_A,
    double sigma, double half_width, const LanczosOptions& opt = {},
    bool bracket_lo = true, bool bracket_hi = true) {
  const double theta_min = 1.0 / half_width;  // wanted: |theta| >= theta_min
  SplitMix64 rng(opt.seed);
  std::vector<Eigen::VectorXcd> V;
  std::vector<double> alpha, beta;
  auto random_start = [&]() {
    Eigen::VectorXcd v(n);
    for (long i = 0; i < n; ++i) v[i] = cxd(rng.symmetric(), rng.symmetric());
    for (const auto& u : V) v -= u.dot(v) * u;
    double nv = v.norm();
    if (nv < 1e-12) throw ConvergenceError("Lanczos start vector degenerate");
    return Eigen::VectorXcd(v / nv);
  };
  V.push_back(random_start());

  int last_count = -1;
  int maxit = std::min<long>(opt.max_iterations, n);
  for (int it = 0; it < maxit; ++it) {
    Eigen::VectorXcd w = solve(V[it]);
    double a = V[it].dot(w).real();
    alpha.push_back(a);
    w -= a * V[it];
    if (it > 0) w -= beta[it - 1] * V[it - 1];
    for (int pass = 0; pass < 2; ++pass)
      for (size_t j = 0; j < V.size(); ++j) w -= V[j].dot(w) * V[j];
    double b = w.norm();
    if (b < 1e-13) {
      // invariant subspace exhausted; restart with a fresh direction
      beta.push_back(0.0);
      if (static_cast<long>(V.size()) >= n) break;
      V.push_back(random_start());
    } else {
      beta.push_back(b);
      V.push_back(w / b);
    }

    int k = it + 1;
    bool final_pass = (it == maxit - 1 || static_cast<long>(V.size()) > n);
    if (k < opt.min_iterations && !final_pass) continue;
    if (k % opt.check_every != 0 && !final_pass) continue;

    Eigen::VectorXd tdiag =
        Eigen::Map<const Eigen::VectorXd>(alpha.data(), k);
    Eigen::VectorXd toff =
        Eigen::Map<const Eigen::VectorXd>(beta.data(), k - 1);
    Eigen::VectorXd theta;
    Eigen::MatrixXd S;
    tridiag_eig(tdiag, toff, theta, S);

    int count = 0;
    bool all_ok = true, above = !bracket_hi, below = !bracket_lo;
    for (int i = 0; i < k; ++i) {
      double th = theta[i];
      if (th == 0.0) continue;
      double resid_t = beta[k - 1] * std::abs(S(k - 1, i));
      bool converged = resid_t <= opt.ritz_tol * std::max(std::abs(th), 1.0);
      double e = sigma + 1.0 / th;
      if (std::abs(th) >= theta_min) {
        ++count;
        if (!converged) all_ok = false;
      } else if (converged) {
        if (e > sigma + half_width) above = true;
        if (e < sigma - half_width) below = true;
      }
    }
    if (all_ok && count > 0 && count == last_count && above && below) {
      // assemble Ritz pairs, refine with a Rayleigh quotient, certify
      WindowEigResult res;
      std::vector<std::pair<double, int>> order;
      for (int i = 0; i < k; ++i)
        if (theta[i] != 0.0 && std::abs(theta[i]) >= theta_min)
          order.push_back({sigma + 1.0 / theta[i], i});
      std::sort(order.begin(), order.end());
      res.values.resize(order.size());
      res.residuals.resize(order.size());
      res.vectors.resize(n, order.size());
      bool certified = true;
      for (size_t c = 0; c < order.size(); ++c) {
        Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
        for (int j = 0; j < k; ++j) x += S(j, order[c].second) * V[j];
        x.normalize();
        Eigen::VectorXcd Ax = apply_A(x);
        double e = x.dot(Ax).real();
        res.values[c] = e;
        res.residuals[c] = (Ax - e * x).norm();
        res.vectors.col(c) = x;
        if (res.residuals[c] > opt.residual_tol) certified = false;
      }
      if (certified) return res;
      all_ok = false;  // keep iterating
    }
    last_count = count;
  }
  throw ConvergenceError("shift-invert Lanczos did not converge the window");
}

// ---------------------------------------------------------------------------
// Krylov propagator: psi(t) = exp(-i t H) psi for Hermitian H.

struct KrylovOptions {
  double tol = 1e-11;    // per-call 2-norm error target, relative to ||v||
  int max_basis = 48;
  int max_splits = 40;
};

namespace detail {

inline Eigen::VectorXcd krylov_step(
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
    const Eigen::VectorXcd& v, double t, const KrylovOptions& opt,
    int depth) {
  double beta0 = v.norm();
  if (beta0 == 0.0 || t == 0.0) return v;
  std::vector<Eigen::VectorXcd> V{v / beta0};
  std::vector<double> alpha, beta;
  Eigen::VectorXcd u_prev;
  for (int m = 1; m <= opt.max_basis; ++m) {
    Eigen::VectorXcd w = apply(V[m - 1]);
    double a = V[m - 1].dot(w).real();
    alpha.push_back(a);
    w -= a * V[m - 1];
    if (m > 1) w -= beta[m - 2] * V[m - 2];
    for (size_t j = 0; j < V.size(); ++j) w -= V[j].dot(w) * V[j];
    double b = w.norm();

    bool check = (m >= 4 && m % 2 == 0) || b < 1e-14 || m == opt.max_basis;
    if (check) {
      Eigen::VectorXd td = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd to =
          m > 1 ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
                      beta.data(), m - 1))
                : Eigen::VectorXd();
      Eigen::VectorXd ev;
      Eigen::MatrixXd es;
      tridiag_eig(td, to, ev, es);
      Eigen::VectorXcd u = Eigen::VectorXcd::Zero(m);
      for (int i = 0; i < m; ++i) {
        cxd phase = std::exp(cxd(0.0, -t * ev[i]));
        u += phase * es(0, i) * es.col(i).cast<cxd>();
      }
      // coupling out of the subspace, Saad's a posteriori estimate
      double err = b * std::abs(u[m - 1]);
      bool happy = b < 1e-14;
      if (err <= opt.tol || happy) {
        Eigen::VectorXcd out = Eigen::VectorXcd::Zero(v.size());
        for (int j = 0; j < m; ++j) out += u[j] * V[j];
        return beta0 * out;
      }
      u_prev = u;
    }
    if (m == opt.max_basis) break;
    beta.push_back(b);
    V.push_back(w / b);
  }
  if (depth >= opt.max_splits)
    throw ConvergenceError("Krylov propagator: time step would not converge");
  Eigen::VectorXcd half = krylov_step(apply, v, 0.5 * t, opt, depth + 1);
  return krylov_step(apply, half, 0.5 * t, opt, depth + 1);
}

}  // namespace detail

inline Eigen::VectorXcd krylov_expm_apply(
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
    const Eigen::VectorXcd& v, double t, const KrylovOptions& opt = {}) {
  return detail::krylov_step(apply, v, t, opt, 0);
}

// ---------------------------------------------------------------------------
// Chebyshev propagator, preferred for long evolutions of bounded Hermitian
// operators.

/// J_0..J_kmax at argument z >= 0 by Miller's downward recurrence,
/// normalized with J_0 + 2 sum J_{2k} = 1.
inline std::vector<double> bessel_j_array(double z, int kmax) {
  std::vector<double> j(kmax + 1, 0.0);
  if (z <= 0.0) {
    j[0] = 1.0;
    return j;
  }
  int start = std::max(kmax + 20 + static_cast<int>(2.0 * std::sqrt(z)),
                       static_cast<int>(z) + 40);
  std::vector<double> tmp(start + 2, 0.0);
  tmp[start + 1] = 0.0;
  tmp[start] = 1e-280;
  for (int k = start; k >= 1; --k) {
    tmp[k - 1] = (2.0 * k / z) * tmp[k] - tmp[k + 1];
    if (std::abs(tmp[k - 1]) > 1e260) {
      for (int i = k - 1; i <= start + 1; ++i) tmp[i] *= 1e-260;
    }
  }
  double norm = tmp[0];
  for (int k = 2; k <= start; k += 2) norm += 2.0 * tmp[k];
  for (int k = 0; k <= kmax; ++k) j[k] = tmp[k] / norm;
  return j;
}

struct ChebyshevOptions {
  double tol = 1e-12;      // coefficient tail cutoff
  double chunk_phase = 800.0;  // R*dt per expansion
};

/// psi <- exp(-i t H) psi with H Hermitian and spectrum inside [lo, hi].
inline void chebyshev_propagate(
    const std::function<void(const cxd*, cxd*)>& apply_raw, long n,
    double lo, double hi, double t, Eigen::VectorXcd& psi,
    const ChebyshevOptions& opt = {}) {
  if (t == 0.0) return;
  if (t < 0.0) throw DimensionError("chebyshev_propagate expects t >= 0");
  const double margin = 1e-7 + 1e-12 * std::max(std::abs(lo), std::abs(hi));
  const double b = 0.5 * (hi + lo);
  const double R = 0.5 * (hi - lo) + margin;
  Eigen::VectorXcd tmp(n), phi0(n), phi1(n), phi2(n);

  auto apply_scaled = [&](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
    apply_raw(in.data(), out.data());
    out = (out - b * in) / R;
  };

  double remaining = t;
  while (remaining > 0.0) {
    double dt = std::min(remaining, opt.chunk_phase / R);
    remaining -= dt;
    double z = R * dt;
    int kmax = static_cast<int>(z + 14.0 * std::pow(z + 1.0, 1.0 / 3.0)) + 24;
    std::vector<double> bes = bessel_j_array(z, kmax);
    while (kmax > 1 && std::abs(bes[kmax]) < opt.tol &&
           std::abs(bes[kmax - 1]) < opt.tol)
      --kmax;

    phi0 = psi;
    apply_scaled(phi0, phi1);
    Eigen::VectorXcd acc = bes[0] * phi0;
    cxd ik = -ii;  // (-i)^k
    acc += 2.0 * bes[1] * ik * phi1;
    for (int k = 2; k <= kmax; ++k) {
      apply_scaled(phi1, phi2);
      phi2 = 2.0 * phi2 - phi0;
      ik *= -ii;
      acc += 2.0 * bes[k] * ik * phi2;
      std::swap(phi0, phi1);
      std::swap(phi1, phi2);
    }
    psi = std::exp(cxd(0.0, -b * dt)) * acc;
  }
}

/// Hermitian check helper used by property tests and operator validation.
inline double hermiticity_defect(
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
    long n, int trials = 20, std::uint64_t seed = 99) {
  SplitMix64 rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXcd x(n), y(n);
    for (long i = 0; i < n; ++i) {
      x[i] = cxd(rng.symmetric(), rng.symmetric());
      y[i] = cxd(rng.symmetric(), rng.symmetric());
    }
    x.normalize();
    y.normalize();
    cxd lhs = y.dot(apply(x));
    cxd rhs = std::conj(x.dot(apply(y)));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

}  // namespace starkstrip
