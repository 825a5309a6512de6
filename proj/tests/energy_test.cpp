#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "comhe/energy.hpp"
#include "comhe/numkit/random.hpp"
#include "support/oracles.hpp"

using namespace comhe;
using comhe::testing::central_difference;
using comhe::testing::relative_error;

namespace {

NeuronBank bank_of(Matrix m) { return NeuronBank(std::move(m)); }

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(Energy, AntipodalPairRiesz2) {
  EXPECT_DOUBLE_EQ(energy(bank_of(Matrix::from_rows({{1, 0}, {-1, 0}})), {2.0}), 0.5);
}

TEST(Energy, EquilateralTriangleRiesz1) {
  const double e = energy(bank_of(comhe::testing::circle_points(3)), {1.0});
  EXPECT_NEAR(e, 2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(e, 3.464102, 1e-6);
}

TEST(Energy, SingleNeuronHalfSpaceNormalized) {
  const EnergySpec spec{1.0, true, true};
  EXPECT_DOUBLE_EQ(energy(bank_of(Matrix::from_rows({{0.3, -2.0, 1.0}})), spec), 0.5);
}

TEST(Energy, AntipodalPairLogKernel) {
  const double e = energy(bank_of(Matrix::from_rows({{0, 2}, {0, -5}})), {0.0});
  EXPECT_NEAR(e, 2.0 * std::log(0.5), 1e-15);
  EXPECT_NEAR(e, -1.386294, 1e-6);
}

TEST(Energy, CoincidentDirectionsAreDegenerate) {
  EXPECT_THROW(energy(bank_of(Matrix::from_rows({{1, 1}, {2, 2}})), {2.0}), DegenerateDistance);
  // A neuron and its own antipode never coincide, but two parallel neurons
  // collide with each other's virtual antipodes in half-space mode.
  EXPECT_THROW(energy(bank_of(Matrix::from_rows({{1, 0}, {-3, 0}})), {2.0, true}),
               DegenerateDistance);
}

TEST(Energy, RejectsTooFewPointsAndBadKernel) {
  EXPECT_THROW(energy(bank_of(Matrix::from_rows({{1, 0}})), {2.0}), InvalidArgument);
  EXPECT_THROW(energy(bank_of(Matrix::from_rows({{1, 0}, {0, 1}})), {-1.0}), InvalidArgument);
  EXPECT_THROW(energy(bank_of(Matrix::from_rows({{1, 0}, {0, 0}})), {2.0}), DegenerateRow);
}

TEST(Energy, MatchesBruteForceDefinition) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix w = gaussian_matrix(6, 5, seed);
    for (double s : {0.0, 0.5, 1.0, 2.0, 3.0}) {
      const double expected = comhe::testing::brute_energy(rowwise_normalize(w), s);
      EXPECT_LT(rel(energy(bank_of(w), {s}), expected), 1e-13);
    }
  }
}

TEST(Energy, HalfSpaceMatchesBruteForceOnAugmentedSet) {
  const Matrix w = gaussian_matrix(5, 4, 42);
  const Matrix unit = rowwise_normalize(w);
  const Matrix aug = vstack(unit, -1.0 * unit);
  const double brute = comhe::testing::brute_energy(aug, 1.0);
  EXPECT_LT(rel(energy(bank_of(w), {1.0, true}), brute), 1e-13);
  EXPECT_LT(rel(energy(bank_of(w), {1.0, true, true}), brute / (10.0 * 9.0)), 1e-13);
}

TEST(EnergyGradient, PairTermAtOrthogonalBasisVectors) {
  // One-sided pair term f(||u - e2||) with s = 2, differentiated at u = e1.
  const Matrix e2 = Matrix::from_rows({{0, 1}});
  const Matrix pair_term = central_difference(
      [&](const Matrix& u) {
        const double r = std::hypot(u(0, 0) - e2(0, 0), u(0, 1) - e2(0, 1));
        return std::pow(r, -2.0);
      },
      Matrix::from_rows({{1, 0}}));
  EXPECT_NEAR(pair_term(0, 0), -0.5, 1e-9);
  EXPECT_NEAR(pair_term(0, 1), 0.5, 1e-9);

  // Ordered pairs count each unordered pair twice, doubling the term.
  const Matrix g = energy_gradient(bank_of(Matrix::from_rows({{1, 0}, {0, 1}})), {2.0},
                                   GradientMode::unit);
  EXPECT_NEAR(g(0, 0), 2.0 * pair_term(0, 0), 1e-9);
  EXPECT_NEAR(g(0, 1), 2.0 * pair_term(0, 1), 1e-9);
}

TEST(EnergyGradient, UnitModeMatchesOneSidedSumDoubled) {
  const Matrix unit = random_unit_rows(5, 4, 17);
  const Matrix g = energy_gradient(bank_of(unit), {2.0}, GradientMode::unit);
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    for (std::size_t k = 0; k < unit.cols(); ++k) {
      double one_sided = 0.0;
      for (std::size_t j = 0; j < unit.rows(); ++j) {
        if (j == i) continue;
        double r2 = 0.0;
        for (std::size_t c = 0; c < unit.cols(); ++c) r2 += std::pow(unit(i, c) - unit(j, c), 2);
        one_sided += -2.0 * (unit(i, k) - unit(j, k)) / (r2 * r2);
      }
      EXPECT_NEAR(g(i, k), 2.0 * one_sided, 1e-10 * std::max(1.0, std::abs(one_sided)));
    }
  }
}

TEST(EnergyGradient, RandomInstancesMatchFiniteDifferences) {
  std::mt19937_64 rng(123);
  std::uniform_int_distribution<int> n_dist(2, 8);
  std::uniform_int_distribution<int> d_dist(2, 16);
  const double kernels[] = {0.0, 1.0, 2.0};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = n_dist(rng);
    const std::size_t d = d_dist(rng);
    const EnergySpec spec{kernels[trial % 3], trial % 2 == 1, trial % 4 >= 2};
    const Matrix w = gaussian_matrix(n, d, rng);
    const Matrix analytic = energy_gradient(bank_of(w), spec);
    const Matrix numeric =
        central_difference([&](const Matrix& x) { return energy(bank_of(x), spec); }, w);
    EXPECT_LT(relative_error(analytic, numeric), 1e-5)
        << "trial " << trial << " n=" << n << " d=" << d << " s=" << spec.s;
  }
}

TEST(EnergyGradient, SpreadConfigurationMatchesFiniteDifferencesTightly) {
  const Matrix w = gaussian_matrix(4, 6, 77);
  const Matrix analytic = energy_gradient(bank_of(w), {2.0});
  const Matrix numeric =
      central_difference([&](const Matrix& x) { return energy(bank_of(x), {2.0}); }, w);
  EXPECT_LT(relative_error(analytic, numeric), 1e-6);
}

TEST(EnergyGradient, TapeNodeAgreesWithAnalytic) {
  const Matrix w = gaussian_matrix(6, 5, 8);
  const EnergySpec spec{2.0, true, false};
  ad::Tape tape;
  ad::Var x = tape.leaf(w);
  ad::Var e = ad::energy_of_raw(x, spec);
  EXPECT_DOUBLE_EQ(e.value().value(), energy(bank_of(w), spec));
  EXPECT_LT(max_abs_diff(ad::backward(tape, e)[x], energy_gradient(bank_of(w), spec)), 1e-12);
}

TEST(EnergyGradient, AntipodalPairIsTangentiallyStationary) {
  const NeuronBank bank = bank_of(Matrix::from_rows({{0.6, 0.8, 0}, {-0.6, -0.8, 0}}));
  EXPECT_LT(frobenius_norm(tangential_gradient(bank, {2.0})), 1e-15);
  // The Euclidean gradient does not vanish there.
  EXPECT_GT(frobenius_norm(energy_gradient(bank, {2.0}, GradientMode::unit)), 0.1);
}

TEST(Stationarity, AntipodalPairScoresTwo) {
  EXPECT_NEAR(stationarity_residual(bank_of(Matrix::from_rows({{1, 0}, {-1, 0}})), {2.0}), 2.0,
              1e-15);
}

TEST(Stationarity, EquilateralTriangle) {
  // With equal weights the barycenter of the other two points is -ŵ_i / 2,
  // so every residual is ||ŵ_i + ŵ_i / 2|| = 1.5.
  EXPECT_NEAR(stationarity_residual(bank_of(comhe::testing::circle_points(3)), {2.0}), 1.5, 1e-12);
}

TEST(Stationarity, GenericConfigurationIsNotStationary) {
  EXPECT_GT(stationarity_residual(bank_of(random_unit_rows(5, 8, 4)), {2.0}), 0.0);
}

TEST(Stationarity, OnlyDefinedForRiesz2) {
  EXPECT_THROW(stationarity_residual(bank_of(comhe::testing::circle_points(3)), {1.0}),
               UnsupportedKernel);
}

TEST(EnergyInvariance, Permutation) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix w = gaussian_matrix(7, 6, rng);
    std::vector<std::size_t> order(w.rows());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Matrix p(w.rows(), w.cols());
    for (std::size_t i = 0; i < order.size(); ++i)
      std::copy(w.row(order[i]).begin(), w.row(order[i]).end(), p.row(i).begin());
    for (const EnergySpec spec : {EnergySpec{0.0}, EnergySpec{1.0, true}, EnergySpec{2.0}}) {
      EXPECT_LT(rel(energy(bank_of(p), spec), energy(bank_of(w), spec)), 1e-13);
    }
  }
}

TEST(EnergyInvariance, PerRowPositiveScale) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> factor(0.01, 100.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix w = gaussian_matrix(6, 4, rng);
    Matrix scaled = w;
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const double f = factor(rng);
      for (double& v : scaled.row(i)) v *= f;
    }
    for (const EnergySpec spec : {EnergySpec{0.0}, EnergySpec{1.0, true, true}, EnergySpec{2.0}}) {
      EXPECT_LT(rel(energy(bank_of(scaled), spec), energy(bank_of(w), spec)), 1e-12);
    }
  }
}

TEST(EnergyInvariance, GlobalRotation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix w = gaussian_matrix(8, 5, seed);
    const Matrix q = comhe::testing::random_orthogonal(5, seed + 100);
    const Matrix rotated = matmul_nt(w, q);  // rows become Q w_i
    for (const EnergySpec spec : {EnergySpec{0.0}, EnergySpec{1.0, true}, EnergySpec{2.0}}) {
      EXPECT_LT(rel(energy(bank_of(rotated), spec), energy(bank_of(w), spec)), 1e-9);
    }
  }
}

TEST(EnergyInvariance, HalfSpaceSignFlip) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix w = gaussian_matrix(6, 4, rng);
    Matrix flipped = w;
    for (std::size_t i = 0; i < w.rows(); ++i)
      if (rng() % 2 == 0)
        for (double& v : flipped.row(i)) v = -v;
    for (double s : {0.0, 1.0, 2.0}) {
      const EnergySpec spec{s, true};
      EXPECT_LT(rel(energy(bank_of(flipped), spec), energy(bank_of(w), spec)), 1e-12);
    }
  }
}

TEST(EnergyMonotonicity, PairEnergyDecreasesWithAngle) {
  for (double s : {0.5, 1.0, 2.0}) {
    double previous = INFINITY;
    for (int k = 1; k < 200; ++k) {
      const double theta = std::numbers::pi * k / 200.0;
      const Matrix pair = Matrix::from_rows({{1, 0, 0}, {std::cos(theta), std::sin(theta), 0}});
      const double e = energy(bank_of(pair), {s});
      EXPECT_LT(e, previous) << "s=" << s << " theta=" << theta;
      previous = e;
    }
  }
}
