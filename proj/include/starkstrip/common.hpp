#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace starkstrip {

using cxd = std::complex<double>;
inline constexpr double pi = 3.14159265358979323846;
inline constexpr cxd ii{0.0, 1.0};

/// Error taxonomy. The CLI maps ConfigError to exit code 2 and
/// ConvergenceError to exit code 3; everything else is a hard failure.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WindowEscapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fold an energy into the fundamental interval (-F/2, F/2].
/// Values exactly on -F/2 land on the +F/2 side.
inline double fold_to_fundamental(double e, double F) {
  return e - F * std::ceil(e / F - 0.5);
}

/// Principal phase in (-pi, pi].
inline double fold_phase(double phi) {
  double p = std::remainder(phi, 2.0 * pi);
  if (p <= -pi) p += 2.0 * pi;
  return p;
}

inline int requested_threads() {
  if (const char* env = std::getenv("HS_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Static block partition: body(i) runs once per i in [0, n); each i must
/// write only to its own output slot so results are independent of the
/// thread count.
template <class Body>
void parallel_for(long n, Body&& body, int threads = 0) {
  if (threads <= 0) threads = requested_threads();
  if (threads == 1 || n <= 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  threads = static_cast<int>(std::min<long>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr first_error = nullptr;
  std::mutex err_mutex;
  for (int t = 0; t < threads; ++t) {
    long lo = n * t / threads;
    long hi = n * (t + 1) / threads;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (long i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// xorshift-based deterministic RNG for reproducible starting vectors and
/// sampled initial conditions (independent of the C++ library's rand).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform in [-1, 1).
  double symmetric() { return 2.0 * uniform() - 1.0; }
  /// Standard normal (Box-Muller).
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace starkstrip
