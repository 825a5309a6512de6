#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "comhe/minimizer.hpp"
#include "support/oracles.hpp"

using namespace comhe;
using comhe::testing::brute_energy;
using comhe::testing::random_orthogonal;

namespace {

double final_energy(const MinimizeResult& r) { return r.trace.points.back().energy_full; }

/// Regular tetrahedron inscribed in S^2.
Matrix tetrahedron() {
  const double c = 1.0 / std::sqrt(3.0);
  return c * Matrix::from_rows({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}});
}

/// N unit vectors forming a regular simplex in R^N (centered, then normalized).
Matrix regular_simplex(std::size_t n) {
  Matrix m(n, n, -1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) m(i, i) += 1.0;
  return rowwise_normalize(m);
}

}  // namespace

TEST(Thomson, TwoPointsBecomeAntipodal) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = minimize(NeuronBank(gaussian_matrix(2, 3, seed)), {}, {2.0, false, false});
    EXPECT_NEAR(final_energy(r), 0.5, 1e-6) << "seed " << seed;
    EXPECT_NEAR(dot(r.bank.weights().row(0), r.bank.weights().row(1)), -1.0, 1e-6);
  }
}

TEST(Thomson, ThreePointsOnCircle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = minimize(NeuronBank(gaussian_matrix(3, 2, seed)), {}, {1.0, false, false});
    EXPECT_NEAR(final_energy(r), 2.0 * std::sqrt(3.0), 1e-6) << "seed " << seed;
  }
}

TEST(Thomson, FourPointsFormTetrahedron) {
  const double oracle = brute_energy(tetrahedron(), 1.0);
  EXPECT_NEAR(oracle, 12.0 / std::sqrt(8.0 / 3.0), 1e-12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = minimize(NeuronBank(gaussian_matrix(4, 3, seed)), {}, {1.0, false, false});
    EXPECT_NEAR(final_energy(r), oracle, 1e-3 * oracle) << "seed " << seed;
  }
}

TEST(Thomson, SimplexIsTheFloorInHighDimension) {
  // N <= d+1 points: the regular simplex minimizes every Riesz energy.
  const double floor = brute_energy(regular_simplex(20), 2.0);
  EXPECT_NEAR(floor, 380.0 / (2.0 + 2.0 / 19.0), 1e-9);
  const auto r = minimize(NeuronBank(gaussian_matrix(20, 64, 3)), {}, {2.0, false, false});
  EXPECT_NEAR(final_energy(r), floor, 1e-6 * floor);
}

TEST(Minimize, RandomProjectionReachesNoHigherFullEnergyThanPlain) {
  double plain = 0.0, rp = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NeuronBank init(gaussian_matrix(20, 64, seed));
    MinimizeConfig cfg;
    cfg.seed = seed;
    plain += final_energy(minimize(init, cfg, {2.0, false, false}));
    cfg.objective = Objective::rp;
    cfg.proj_dim = 8;
    cfg.views = 5;
    rp += final_energy(minimize(init, cfg, {2.0, false, false}));
  }
  EXPECT_LE(rp / 5.0, plain / 5.0);
}

TEST(Minimize, PlainTrajectoryIsMonotone) {
  MinimizeConfig cfg;
  cfg.lr = 1.0;  // deliberately too large; backtracking must recover
  cfg.max_iters = 300;
  const auto r = minimize(NeuronBank(gaussian_matrix(8, 3, 11)), cfg, {2.0, false, false});
  EXPECT_LT(r.final_lr, 1.0);
  for (std::size_t k = 1; k < r.trace.points.size(); ++k) {
    EXPECT_LE(r.trace.points[k].objective, r.trace.points[k - 1].objective);
    EXPECT_EQ(r.trace.points[k].iter, r.trace.points[k - 1].iter + 1);
  }
}

TEST(Minimize, OutputRowsAreUnit) {
  for (Objective o : {Objective::plain, Objective::half_space, Objective::rp, Objective::ap_alternating,
                      Objective::ap_unrolled, Objective::adversarial, Objective::group}) {
    MinimizeConfig cfg;
    cfg.objective = o;
    cfg.max_iters = 30;
    cfg.proj_dim = 4;
    cfg.views = 2;
    cfg.group_size = 4;
    const auto r = minimize(NeuronBank(3.0 * gaussian_matrix(6, 12, 21)), cfg, {2.0, false, false});
    const Matrix norms = row_norms(r.bank.weights());
    for (double n : norms.data()) EXPECT_NEAR(n, 1.0, 1e-12) << to_string(o);
    EXPECT_EQ(r.trace.points.size(), 31u) << to_string(o);
  }
}

TEST(Minimize, ProjectedObjectivesLowerFullEnergy) {
  const NeuronBank init(gaussian_matrix(10, 16, 22));
  const double start = energy(init, {2.0, false, false});
  for (Objective o : {Objective::half_space, Objective::rp, Objective::ap_alternating,
                      Objective::ap_unrolled, Objective::group}) {
    MinimizeConfig cfg;
    cfg.objective = o;
    cfg.max_iters = 200;
    cfg.proj_dim = 6;
    cfg.views = 3;
    const auto r = minimize(init, cfg, {2.0, false, false});
    EXPECT_LT(final_energy(r), start) << to_string(o);
  }
}

TEST(Minimize, DeterministicTrace) {
  for (Objective o : {Objective::plain, Objective::rp, Objective::ap_unrolled, Objective::adversarial}) {
    MinimizeConfig cfg;
    cfg.objective = o;
    cfg.max_iters = 50;
    cfg.proj_dim = 4;
    cfg.seed = 9;
    const NeuronBank init(gaussian_matrix(6, 10, 23));
    std::ostringstream a, b;
    minimize(init, cfg, {1.0, false, false}).trace.write_csv(a);
    minimize(init, cfg, {1.0, false, false}).trace.write_csv(b);
    EXPECT_EQ(a.str(), b.str()) << to_string(o);
  }
}

TEST(Minimize, RotationEquivariance) {
  const Matrix w = gaussian_matrix(6, 3, 24);
  const Matrix q = random_orthogonal(3, 25);
  const EnergySpec spec{1.0, false, false};
  const auto a = minimize(NeuronBank(w), {}, spec);
  const auto b = minimize(NeuronBank(matmul(w, q)), {}, spec);
  EXPECT_NEAR(final_energy(a), final_energy(b), 1e-6);
}

TEST(Minimize, StopsOnTolerance) {
  MinimizeConfig cfg;
  cfg.tol = 1e-3;
  const auto r = minimize(NeuronBank(gaussian_matrix(3, 2, 26)), cfg, {1.0, false, false});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.trace.points.back().grad_norm, 1e-3);
  EXPECT_LT(r.trace.points.size(), cfg.max_iters);
}

TEST(Minimize, TraceRecordsFullSpaceEnergyUnderHalfSpaceObjective) {
  MinimizeConfig cfg;
  cfg.objective = Objective::half_space;
  cfg.max_iters = 5;
  const NeuronBank init(gaussian_matrix(5, 4, 27));
  const auto r = minimize(init, cfg, {2.0, false, false});
  EXPECT_DOUBLE_EQ(r.trace.points[0].energy_full, energy(init, {2.0, false, false}));
  EXPECT_DOUBLE_EQ(r.trace.points[0].objective, energy(init, {2.0, true, false}));
}

TEST(Minimize, CsvFormat) {
  EnergyTrace t;
  t.points.push_back({0, 0.5, 0.25, 1e-3});
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "iter,energy_full,objective,grad_norm\n0,0.5,0.25,0.001\n");
}

TEST(Minimize, RejectsBadConfig) {
  const NeuronBank init(gaussian_matrix(3, 3, 1));
  MinimizeConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(minimize(init, cfg, {}), InvalidArgument);
  cfg = {};
  cfg.tol = -1.0;
  EXPECT_THROW(minimize(init, cfg, {}), InvalidArgument);
  cfg = {};
  cfg.objective = Objective::rp;
  cfg.proj_dim = 9;
  EXPECT_THROW(minimize(init, cfg, {}), InvalidArgument);
}

TEST(Minimize, DegenerateStartIsRejected) {
  const Matrix w = Matrix::from_rows({{1, 0}, {1, 0}});
  EXPECT_THROW(minimize(NeuronBank(w), {}, {}), DegenerateDistance);
}

TEST(Minimize, ObjectiveNamesRoundTrip) {
  for (Objective o : {Objective::plain, Objective::half_space, Objective::rp, Objective::ap_alternating,
                      Objective::ap_unrolled, Objective::adversarial, Objective::group}) {
    EXPECT_EQ(objective_from_string(to_string(o)), o);
  }
  EXPECT_FALSE(objective_from_string("nope").has_value());
}
