#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "starkstrip/spectral_stats.hpp"

using namespace starkstrip;

namespace {

/// Random-matrix oracle: eigenvalues of GOE matrices, central half kept.
std::vector<std::vector<double>> goe_level_sets(int n_matrices, int dim,
                                                std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::vector<double>> sets;
  for (int m = 0; m < n_matrices; ++m) {
    Eigen::MatrixXd A(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j) {
        double v = rng.normal() * (i == j ? std::sqrt(2.0) : 1.0);
        A(i, j) = v;
        A(j, i) = v;
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A,
                                                      Eigen::EigenvaluesOnly);
    std::vector<double> mid;
    for (int i = dim / 4; i < 3 * dim / 4; ++i)
      mid.push_back(es.eigenvalues()[i]);
    sets.push_back(std::move(mid));
  }
  return sets;
}

}  // namespace

TEST_CASE("GOE oracle: Wigner-Dyson preferred, mean gap ratio 0.5307") {
  auto sets = goe_level_sets(60, 80, 424242);
  auto st = unfold_and_spacings(sets);
  CHECK(st.n_spacings > 2000);
  CHECK(st.ks_wigner_dyson < st.ks_poisson);
  CHECK(st.ks_wigner_dyson < 0.05);
  CHECK(std::abs(st.mean_gap_ratio - 0.5307) < 0.012);
  // unit mean after unfolding
  double mean = 0.0;
  for (double s : st.spacings) mean += s;
  mean /= st.n_spacings;
  CHECK(std::abs(mean - 1.0) < 1e-3);
  // histogram integrates to one
  double bw = st.hist_centers[1] - st.hist_centers[0];
  CHECK(std::abs(st.hist_density.sum() * bw - 1.0) < 0.05);
}

TEST_CASE("picket fence: spacing distribution collapses at s = 1") {
  std::vector<std::vector<double>> sets;
  for (int k = 0; k < 30; ++k) {
    std::vector<double> levels;
    for (int i = 0; i < 25; ++i) levels.push_back(0.37 * i + 0.01 * k);
    sets.push_back(levels);
  }
  auto st = unfold_and_spacings(sets);
  for (double s : st.spacings) CHECK(std::abs(s - 1.0) < 1e-9);
  CHECK(st.ks_poisson > 0.5);
  CHECK(st.mean_gap_ratio == doctest::Approx(1.0));
}

TEST_CASE("Wigner-Dyson sampler passes its own KS test") {
  SplitMix64 rng(7);
  std::vector<double> draw;
  for (int i = 0; i < 10000; ++i)
    draw.push_back(wigner_dyson_quantile(rng.uniform()));
  CHECK(ks_distance(draw, &wigner_dyson_cdf) < 0.02);
}

TEST_CASE("unfolding is idempotent on unit-mean spacings") {
  SplitMix64 rng(9);
  std::vector<std::vector<double>> sets(40);
  for (auto& levels : sets) {
    double acc = 0.0;
    for (int i = 0; i < 30; ++i) {
      levels.push_back(acc);
      acc += wigner_dyson_quantile(rng.uniform());
    }
  }
  auto once = unfold_and_spacings(sets);
  // feed the unfolded spacings back as a level staircase
  std::vector<std::vector<double>> again_sets;
  {
    std::vector<double> staircase;
    double acc = 0.0;
    for (double s : once.spacings) {
      staircase.push_back(acc);
      acc += s;
    }
    staircase.push_back(acc);
    again_sets.push_back(staircase);
  }
  UnfoldOptions wide;
  wide.window = 1000000;  // global mean only: no local reshaping
  auto twice = unfold_and_spacings(again_sets, wide);
  REQUIRE(once.spacings.size() == twice.spacings.size());
  for (size_t i = 0; i < once.spacings.size(); ++i)
    CHECK(std::abs(once.spacings[i] - twice.spacings[i]) < 1e-6);
}

TEST_CASE("spectrum flow: Lx levels per field, J=0 degenerate control") {
  auto grid = uniform_grid(0.1, 0.3, 8);
  auto flow = spectrum_flow(1, 10, 1.0, 10, BoundaryX::Dirichlet, grid);
  CHECK(flow.energies.rows() == 8);
  CHECK(flow.energies.cols() == 10);
  for (int i = 0; i < 8; ++i)
    for (int nu = 0; nu < 10; ++nu) {
      CHECK(flow.energies(i, nu) > -0.5 * grid[i] - 1e-12);
      CHECK(flow.energies(i, nu) <= 0.5 * grid[i] + 1e-12);
    }

  // J -> 0: every level collapses onto the ladder anchor E = 0
  auto flow0 = spectrum_flow(1, 10, 0.0, 10, BoundaryX::Dirichlet, {0.2});
  for (int nu = 0; nu < 10; ++nu)
    CHECK(std::abs(flow0.energies(0, nu)) < 1e-6);

  CHECK_THROWS_AS(
      spectrum_flow(1, 10, 1.0, 10, BoundaryX::Dirichlet, {0.7}),
      ConfigError);  // above F_cr
}

TEST_CASE("level velocities: chaotic strip beats the J=0 control") {
  const double F = 0.1, dF = F * 1e-3;
  auto e1 = fundamental_energies(1, 10, 1.0, 10, BoundaryX::Dirichlet, F);
  auto e2 =
      fundamental_energies(1, 10, 1.0, 10, BoundaryX::Dirichlet, F + dF);
  double spacing = F / 10.0;
  double moved = 0.0;
  for (int nu = 0; nu < 10; ++nu) {
    double d = 1e300;
    for (int k = -1; k <= 1; ++k)
      d = std::min(d, std::abs(e2[nu] - e1[nu] + k * F));
    moved = std::max(moved, d / spacing);
  }
  CHECK(moved > 0.05);  // of the order of the mean spacing

  auto c1 = fundamental_energies(1, 10, 0.0, 10, BoundaryX::Dirichlet, F);
  auto c2 =
      fundamental_energies(1, 10, 0.0, 10, BoundaryX::Dirichlet, F + dF);
  double ctrl = 0.0;
  for (int nu = 0; nu < 10; ++nu)
    ctrl = std::max(ctrl, std::abs(c2[nu] - c1[nu]) / spacing);
  CHECK(ctrl < 1e-6);
  CHECK(moved > 1000.0 * std::max(ctrl, 1e-12));
}

TEST_CASE("pooled strip statistics lean Wigner-Dyson") {
  // coarse F grid: enough slices for the KS comparison to stabilize,
  // full resolution lives in the acceptance run
  double fcr = critical_field(0.1, 1.0);
  auto grid = uniform_grid(0.15 * fcr, 0.55 * fcr, 60);
  auto st = strip_spacing_statistics(1, 10, 1.0, 10, BoundaryX::Dirichlet,
                                     grid);
  CHECK(st.n_spacings >= 500);
  CHECK(st.ks_wigner_dyson < st.ks_poisson);
  CHECK(std::abs(st.mean_gap_ratio - 0.5307) < 0.05);
}
