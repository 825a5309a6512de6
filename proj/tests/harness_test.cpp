#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <sstream>

#include "comhe/harness.hpp"
#include "support/oracles.hpp"

using namespace comhe;
using namespace comhe::harness;
using comhe::testing::central_difference;
using comhe::testing::relative_error;

namespace {

/// Shared synthetic task for the energy-dynamics comparisons.
const Dataset& task() {
  static const Dataset ds = make_dataset(8, 100, 16, 7, 1.0);
  return ds;
}

MlpSpec task_spec() { return MlpSpec{{16, 64, 64, 64, 8}}; }

/// Small problem for gradient checks.
struct Tiny {
  Dataset data = make_dataset(4, 10, 6, 3, 0.8);
  MlpSpec spec{{6, 8, 8, 4}};

  TrainConfig config(Regularizer r) const {
    TrainConfig cfg;
    cfg.regularizer = r;
    cfg.proj_dim = 4;
    cfg.views = 3;
    cfg.group_size = 3;
    cfg.bilateral_rank = 4;
    cfg.seeds = {0};
    cfg.epochs = 2;
    cfg.batch_size = 8;
    return cfg;
  }
};

std::string csv(const ArmSummary& s) {
  std::ostringstream os;
  s.write_csv(os);
  return os.str();
}

/// Flattens params into one column so a single FD sweep covers everything.
Matrix flatten(const Params& p) {
  std::size_t n = 0;
  for (const auto& m : p.w) n += m.size();
  for (const auto& m : p.b) n += m.size();
  Matrix out(n, 1);
  std::size_t k = 0;
  for (const auto* group : {&p.w, &p.b})
    for (const auto& m : *group)
      for (double v : m.data()) out.data()[k++] = v;
  return out;
}

Params unflatten(const Matrix& flat, const Params& shape) {
  Params p = shape;
  std::size_t k = 0;
  for (auto* group : {&p.w, &p.b})
    for (auto& m : *group)
      for (double& v : m.data()) v = flat.data()[k++];
  return p;
}

}  // namespace

// ---- dataset -----------------------------------------------------------------

TEST(Dataset, DeterministicPerSeed) {
  const Dataset a = make_dataset(5, 20, 7, 11);
  const Dataset b = make_dataset(5, 20, 7, 11);
  EXPECT_EQ(max_abs_diff(a.x_train, b.x_train), 0.0);
  EXPECT_EQ(max_abs_diff(a.x_test, b.x_test), 0.0);
  EXPECT_EQ(a.y_train, b.y_train);
  const Dataset c = make_dataset(5, 20, 7, 12);
  EXPECT_GT(max_abs_diff(a.x_train, c.x_train), 0.0);
}

TEST(Dataset, BalancedWithEightyTwentySplit) {
  const Dataset d = make_dataset(6, 25, 5, 1);
  std::vector<std::size_t> count(6, 0);
  for (auto y : d.y_train) ++count[y];
  for (auto y : d.y_test) ++count[y];
  for (auto c : count) EXPECT_EQ(c, 25u);
  EXPECT_EQ(d.y_train.size(), 6u * 20u);
  EXPECT_EQ(d.y_test.size(), 6u * 5u);
}

TEST(Dataset, SamplesLieOnSphere) {
  const Dataset d = make_dataset(4, 10, 9, 2, 3.0);
  const Matrix n = row_norms(d.x_train);
  for (double v : n.data()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Dataset, WideMarginIsLinearlySeparable) {
  const Dataset d = make_dataset(10, 100, 16, 4, 0.2);
  // Least-squares one-hot regression with a bias column.
  const auto design = [](const Matrix& x) {
    Eigen::MatrixXd a(x.rows(), x.cols() + 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) a(i, j) = x(i, j);
      a(i, x.cols()) = 1.0;
    }
    return a;
  };
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(d.y_train.size(), 10);
  for (std::size_t i = 0; i < d.y_train.size(); ++i) y(i, d.y_train[i]) = 1.0;
  const Eigen::MatrixXd coef = design(d.x_train).colPivHouseholderQr().solve(y);
  const Eigen::MatrixXd scores = design(d.x_test) * coef;
  std::size_t right = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best;
    scores.row(i).maxCoeff(&best);
    right += static_cast<std::size_t>(best) == d.y_test[i];
  }
  EXPECT_GT(static_cast<double>(right) / scores.rows(), 0.95);
}

TEST(Dataset, RejectsTooFewClasses) { EXPECT_THROW(make_dataset(3, 10, 4, 0), InvalidArgument); }

// ---- configuration -----------------------------------------------------------

TEST(Config, RegularizerNamesRoundTrip) {
  for (Regularizer r : kAllRegularizers) EXPECT_EQ(regularizer_from_string(to_string(r)), r);
  EXPECT_FALSE(regularizer_from_string("l2").has_value());
}

TEST(Config, LearningRateIsHalvedTwice) {
  TrainConfig cfg;
  cfg.lr = 0.08;
  cfg.epochs = 8;
  EXPECT_DOUBLE_EQ(cfg.lr_at(0), 0.08);
  EXPECT_DOUBLE_EQ(cfg.lr_at(3), 0.08);
  EXPECT_DOUBLE_EQ(cfg.lr_at(4), 0.04);
  EXPECT_DOUBLE_EQ(cfg.lr_at(6), 0.02);
  EXPECT_DOUBLE_EQ(cfg.lr_at(7), 0.02);
}

TEST(Config, MlpNeedsTwoHiddenLayers) {
  EXPECT_THROW(MlpSpec({4, 8, 4}).validate(), InvalidArgument);
  EXPECT_NO_THROW(MlpSpec({4, 8, 8, 4}).validate());
}

TEST(Config, RejectsBadValues) {
  TrainConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.momentum = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.seeds.clear();
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Config, ShapeMustMatchData) {
  Tiny t;
  MlpSpec wrong{{5, 8, 8, 4}};
  EXPECT_THROW(Trainer(wrong, t.config(Regularizer::none), t.data, 0), ShapeMismatch);
}

// ---- training ----------------------------------------------------------------

TEST(Train, GradientMatchesFiniteDifferencesForEveryArm) {
  Tiny t;
  const auto idx = epoch_order(t.data.y_train.size(), 0, 0);
  const Batch batch = gather(t.data.x_train, t.data.y_train, idx, 0, 8);
  for (Regularizer r : kAllRegularizers) {
    Trainer trainer(t.spec, t.config(r), t.data, 5);
    trainer.regularizer().before_step(trainer.params());
    const Params p0 = trainer.params();
    const LossGrad lg = trainer.loss_and_grad(p0, batch);
    const Matrix fd = central_difference(
        [&](const Matrix& flat) { return trainer.loss_and_grad(unflatten(flat, p0), batch).loss; }, flatten(p0),
        1e-6);
    EXPECT_LT(relative_error(flatten(lg.grad), fd), 1e-4) << to_string(r);
  }
}

TEST(Train, ZeroWeightReproducesBaselineExactly) {
  Tiny t;
  const std::string base = csv(train(t.spec, t.config(Regularizer::none), t.data));
  for (Regularizer r : kAllRegularizers) {
    TrainConfig cfg = t.config(r);
    cfg.reg_weight = 0.0;
    EXPECT_EQ(csv(train(t.spec, cfg, t.data)), base) << to_string(r);
  }
}

TEST(Train, InitialEnergyIsSharedAcrossArms) {
  Tiny t;
  const double e0 = train(t.spec, t.config(Regularizer::none), t.data).runs[0].epochs[0].total_energy;
  for (Regularizer r : kAllRegularizers) {
    const auto s = train(t.spec, t.config(r), t.data);
    EXPECT_EQ(s.runs[0].epochs[0].total_energy, e0) << to_string(r);
  }
  TrainConfig cfg = t.config(Regularizer::none);
  EXPECT_EQ(train_rotation(t.spec, cfg, t.data).runs[0].epochs[0].total_energy, e0);
}

TEST(Train, EnergiesStayFiniteAndDeterministic) {
  Tiny t;
  for (Regularizer r : kAllRegularizers) {
    const auto a = train(t.spec, t.config(r), t.data, true);
    for (double e : a.runs[0].step_energy) EXPECT_TRUE(std::isfinite(e)) << to_string(r);
    for (const auto& ep : a.runs[0].epochs)
      for (double e : ep.layer_energy) EXPECT_TRUE(std::isfinite(e)) << to_string(r);
    EXPECT_EQ(csv(a), csv(train(t.spec, t.config(r), t.data))) << to_string(r);
  }
}

TEST(Train, ShufflingIsSharedAndSeeded) {
  EXPECT_EQ(epoch_order(50, 3, 2), epoch_order(50, 3, 2));
  EXPECT_NE(epoch_order(50, 3, 2), epoch_order(50, 3, 1));
  EXPECT_NE(epoch_order(50, 3, 2), epoch_order(50, 4, 2));
}

TEST(Train, DivergenceIsReported) {
  Tiny t;
  TrainConfig cfg = t.config(Regularizer::none);
  cfg.lr = 1e150;
  cfg.weight_decay = 0.0;
  EXPECT_THROW(train(t.spec, cfg, t.data), DivergedLoss);
}

TEST(Train, CsvAndSummaryLayout) {
  Tiny t;
  const auto s = train(t.spec, t.config(Regularizer::hs_mhe), t.data);
  const std::string text = csv(s);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "seed,iter,train_loss,test_error,energy_layer_1,energy_layer_2,energy_total");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 3);
  const json j = s.to_json();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"arm", "seeds", "mean_error", "std_error", "final_energy_mean"}));
  EXPECT_EQ(j["arm"], "hs_mhe");
}

TEST(Train, LoggedEnergyIsNormalizedHalfSpaceWithUnitExponent) {
  const Matrix w = gaussian_matrix(5, 4, 31);
  const Matrix u = rowwise_normalize(w);
  Matrix aug(10, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      aug(i, k) = u(i, k);
      aug(i + 5, k) = -u(i, k);
    }
  double sum = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j)
      if (i != j) sum += 1.0 / std::sqrt(2.0 - 2.0 * dot(aug.row(i), aug.row(j)));
  EXPECT_NEAR(logged_energy(w), sum / 90.0, 1e-12);
}

TEST(Train, RandomProjectionLowersEnergyRelativeToBaseline) {
  TrainConfig cfg;
  const auto none = train(task_spec(), cfg, task());
  cfg.regularizer = Regularizer::rp;
  const auto rp = train(task_spec(), cfg, task());
  int wins = 0;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    wins += rp.runs[i].epochs.back().total_energy < none.runs[i].epochs.back().total_energy;
  EXPECT_GE(wins, 4);
}

// ---- rotation training -------------------------------------------------------

TEST(Rotation, GramSchmidtIsOrthonormal) {
  const Matrix r = gaussian_matrix(7, 7, 41);
  const Matrix q = gram_schmidt(r);
  EXPECT_LT(max_abs_diff(matmul_nt(q, q), Matrix::identity(7)), 1e-12);
  // Row i of Q lies in the span of the first i+1 rows of R.
  for (std::size_t i = 0; i < 7; ++i) EXPECT_GT(dot(q.row(i), r.row(i)), 0.0);
}

TEST(Rotation, GramSchmidtGradientMatchesFiniteDifferences) {
  const Matrix r = gaussian_matrix(5, 5, 42);
  const Matrix weight = gaussian_matrix(5, 5, 43);
  const auto f = [&](const Matrix& x) {
    ad::Tape tape;
    return ad::sum(ad::hadamard(gram_schmidt(tape.leaf(x)), tape.constant(weight))).value().value();
  };
  ad::Tape tape;
  ad::Var x = tape.leaf(r);
  ad::Var y = ad::sum(ad::hadamard(gram_schmidt(x), tape.constant(weight)));
  EXPECT_LT(relative_error(ad::backward(tape, y)[x], central_difference(f, r)), 1e-6);
}

TEST(Rotation, CollapsedRowIsRejected) {
  Matrix r = gaussian_matrix(4, 4, 44);
  for (std::size_t k = 0; k < 4; ++k) r(2, k) = 2.0 * r(0, k) - r(1, k);
  EXPECT_THROW(gram_schmidt(r), GramSchmidtDegenerate);
}

TEST(Rotation, EnergyIsConstantAndRotationsStayOrthonormal) {
  const Dataset data = make_dataset(4, 60, 16, 8, 1.0);
  MlpSpec spec{{16, 32, 32, 4}};
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 21;  // 24 steps per epoch
  cfg.seeds = {0};
  RotationTrainer t(spec, cfg, data, 0);
  const double e0 = t.record(0, 0.0).total_energy;
  std::size_t steps = 0;
  const std::size_t n = data.y_train.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto idx = epoch_order(n, 0, epoch);
    for (std::size_t at = 0; at < n; at += cfg.batch_size, ++steps) {
      t.step(gather(data.x_train, data.y_train, idx, at, std::min(n, at + cfg.batch_size)), cfg.lr_at(epoch));
      for (std::size_t l = 0; l < 2; ++l) {
        const Matrix q = t.orthonormal(l);
        ASSERT_LT(max_abs_diff(matmul_nt(q, q), Matrix::identity(q.rows())), 1e-9) << "step " << steps;
      }
      ASSERT_NEAR(t.record(0, 0.0).total_energy, e0, 1e-9) << "step " << steps;
    }
  }
  EXPECT_GE(steps, 500u);
  // The rotations did move.
  EXPECT_GT(max_abs_diff(t.rotations()[0], Matrix::identity(16)), 1e-3);
}

TEST(Rotation, StepTraceMatchesInitialEnergy) {
  Tiny t;
  const auto s = train_rotation(t.spec, t.config(Regularizer::none), t.data);
  const double e0 = s.runs[0].epochs[0].total_energy;
  ASSERT_FALSE(s.runs[0].step_energy.empty());
  for (double e : s.runs[0].step_energy) EXPECT_NEAR(e, e0, 1e-9);
}

TEST(Rotation, BeatsBaselineOnMostSeeds) {
  TrainConfig cfg;
  const auto none = train(task_spec(), cfg, task());
  const auto rot = train_rotation(task_spec(), cfg, task(), false);
  int wins = 0;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) wins += rot.runs[i].test_error < none.runs[i].test_error;
  EXPECT_GE(wins, 3);
}
