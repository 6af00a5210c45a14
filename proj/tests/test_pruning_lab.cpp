#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "penprior/pruning_lab.hpp"

using namespace penprior;

namespace {

// Central differences of a scalar function of one parameter, step 1e-5.
template <class F>
double central_difference(double& param, F&& f) {
  const double h = 1e-5, keep = param;
  param = keep + h;
  const double up = f();
  param = keep - h;
  const double down = f();
  param = keep;
  return (up - down) / (2.0 * h);
}

double relative_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

struct Batch {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Batch random_batch(int inputs, int classes, int size, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Batch b{Eigen::MatrixXd(inputs, size), std::vector<int>(static_cast<std::size_t>(size))};
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = z(rng);
  for (auto& y : b.y) y = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
  return b;
}

LambdaPlan plan_for(const MLPModel& m, PlanPenalty kind, long n = 700, long B = 32, double global = -1.0) {
  PlanOptions o;
  if (kind == PlanPenalty::SparseGroupLasso) o.mixing_gamma = 0.3;
  auto p = plan(architecture_of(m, n, B), kind, Scheme::Bayesian, o);
  if (global >= 0.0) p.global_lambda = global;
  return p;
}

TrainConfig quick_config(std::uint64_t seed, int patience = 10) {
  TrainConfig c;
  c.seed = seed;
  c.patience = patience;
  c.learning_rates = {1e-2};
  return c;
}

Dataset fixture_dataset() { return make_synthetic_dataset(1000, 20, 4, 2.0, 42, 1.0); }

}  // namespace

TEST(Dataset, SplitSizesAndDeterminism) {
  auto a = make_synthetic_dataset(1000, 5, 3, 0.5, 7);
  EXPECT_EQ(a.train.size(), 700u);
  EXPECT_EQ(a.validation.size(), 150u);
  EXPECT_EQ(a.test.size(), 150u);
  EXPECT_NO_THROW(a.validate());
  auto b = make_synthetic_dataset(1000, 5, 3, 0.5, 7);
  EXPECT_TRUE(a.features == b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.train, b.train);
  auto odd = make_synthetic_dataset(101, 2, 2, 0.5, 1);
  EXPECT_EQ(odd.validation.size(), 15u);
  EXPECT_EQ(odd.train.size(), 71u);
  EXPECT_THROW(make_synthetic_dataset(10, 2, 1, 0.1, 0), Error);
}

TEST(Dataset, NoiselessClustersAreLinearlySeparable) {
  auto d = make_synthetic_dataset(600, 6, 4, 0.0, 3);
  MLPModel m = MLPModel::make(6, {}, 4, Activation::ReLU, 3);
  auto p = plan_for(m, PlanPenalty::L2, static_cast<long>(d.train.size()), 32, 0.0);
  auto rep = train_two_phase(m, d, p, quick_config(3));
  EXPECT_EQ(rep.final_test_acc, 1.0);
}

TEST(Dataset, CsvIngestion) {
  const std::string path = ::testing::TempDir() + "penprior_ds.csv";
  {
    std::ofstream f(path);
    f << "a,b,label\n";
    for (int i = 0; i < 40; ++i) f << i * 0.5 << "," << -i << "," << (i % 3) << "\n";
  }
  auto d = load_csv_dataset(path, 1);
  EXPECT_EQ(d.n_samples(), 40u);
  EXPECT_EQ(d.n_features(), 2);
  EXPECT_EQ(d.n_classes, 3);
  EXPECT_EQ(d.train.size() + d.validation.size() + d.test.size(), 40u);
  {
    std::ofstream f(path);
    f << "a,label\n1,0\n2,x\n";
  }
  EXPECT_THROW(load_csv_dataset(path, 1), Error);
  std::remove(path.c_str());
}

TEST(ForwardBackward, MatchesFiniteDifferencesOnRandomModels) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int in = 2 + trial % 4, classes = 2 + trial % 3;
    std::vector<int> hidden;
    for (int h = 0; h < trial % 3; ++h) hidden.push_back(3 + (trial + h) % 4);
    const auto act = trial % 2 ? Activation::Tanh : Activation::ReLU;
    MLPModel m = MLPModel::make(in, hidden, classes, act, rng());
    for (auto& L : m.layers) L.b = Eigen::VectorXd::Random(L.b.size()) * 0.3;
    const auto batch = random_batch(in, classes, 5, rng);
    const auto fb = forward_backward(m, batch.x, batch.y);
    auto loss = [&] { return forward_backward(m, batch.x, batch.y).loss; };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      Eigen::MatrixXd fd(m.layers[l].W.rows(), m.layers[l].W.cols());
      for (Eigen::Index i = 0; i < fd.size(); ++i) fd.data()[i] = central_difference(m.layers[l].W.data()[i], loss);
      EXPECT_LT(relative_gap(fd, fb.grads.dW[l]), 1e-4) << "trial " << trial << " layer " << l;
      Eigen::MatrixXd fdb(m.layers[l].b.size(), 1);
      for (Eigen::Index i = 0; i < fdb.size(); ++i) fdb(i) = central_difference(m.layers[l].b(i), loss);
      EXPECT_LT(relative_gap(fdb, Eigen::MatrixXd(fb.grads.db[l])), 1e-4) << "trial " << trial << " layer " << l;
    }
  }
}

TEST(ForwardBackward, SingleLinearLayerToyBatch) {
  MLPModel m = MLPModel::make(3, {}, 3, Activation::ReLU, 5);
  Eigen::MatrixXd x = Eigen::MatrixXd::Identity(3, 3);
  std::vector<int> y{0, 1, 2};
  const auto fb = forward_backward(m, x, y);
  auto loss = [&] { return forward_backward(m, x, y).loss; };
  Eigen::MatrixXd fd(3, 3);
  for (Eigen::Index i = 0; i < 9; ++i) fd.data()[i] = central_difference(m.layers[0].W.data()[i], loss);
  EXPECT_LT(relative_gap(fd, fb.grads.dW[0]), 1e-4);
}

TEST(ForwardBackward, ZeroWeightsGiveLogTwo) {
  MLPModel m = MLPModel::make(4, {3}, 2, Activation::Tanh, 1);
  for (auto& L : m.layers) L.W.setZero();
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 4);
  std::vector<int> y{0, 1, 0, 1};
  EXPECT_NEAR(forward_backward(m, x, y).loss, std::log(2.0), 1e-15);
}

TEST(ForwardBackward, PrunedNeuronHasZeroGradientBlock) {
  std::mt19937_64 rng(9);
  MLPModel m = MLPModel::make(4, {5, 3}, 3, Activation::ReLU, 9);
  m.prune_neuron(0, 2);
  const auto batch = random_batch(4, 3, 6, rng);
  const auto fb = forward_backward(m, batch.x, batch.y);
  EXPECT_EQ(fb.grads.dW[0].row(2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(fb.grads.db[0](2), 0.0);
  EXPECT_EQ(fb.grads.dW[1].col(2).cwiseAbs().maxCoeff(), 0.0);
  Eigen::MatrixXd wrong(5, 6);
  EXPECT_THROW(forward_backward(m, wrong, batch.y), Error);
}

TEST(Penalty, Examples) {
  MLPModel m = MLPModel::make(1, {}, 1, Activation::ReLU, 0);
  m.layers[0].W(0, 0) = 2.0;
  auto p = plan_for(m, PlanPenalty::L2);
  p.per_layer[0].lambda_l = 3.0;
  auto e = penalty_value_and_subgradient(m, p, 1.0);
  EXPECT_EQ(e.value, 12.0);
  EXPECT_EQ(e.grad[0](0, 0), 12.0);

  MLPModel g = MLPModel::make(2, {}, 2, Activation::ReLU, 0);
  g.layers[0].W << 3.0, 4.0, 0.0, 0.0;
  auto pg = plan_for(g, PlanPenalty::GroupLasso);
  pg.per_layer[0].lambda_l = 1.0;
  auto eg = penalty_value_and_subgradient(g, pg, 1.0);
  EXPECT_DOUBLE_EQ(eg.value, 5.0);
  EXPECT_DOUBLE_EQ(eg.grad[0](0, 0), 0.6);
  EXPECT_DOUBLE_EQ(eg.grad[0](0, 1), 0.8);
  EXPECT_EQ(eg.grad[0].row(1).norm(), 0.0);
}

TEST(Penalty, SubgradientMatchesFiniteDifferencesAwayFromKinks) {
  std::mt19937_64 rng(77);
  const PlanPenalty kinds[] = {PlanPenalty::L2, PlanPenalty::L1, PlanPenalty::GroupLasso,
                               PlanPenalty::ReversedGroupLasso, PlanPenalty::SparseGroupLasso};
  for (int trial = 0; trial < 20; ++trial) {
    MLPModel m = MLPModel::make(3, {4}, 2, Activation::ReLU, rng());
    for (auto& L : m.layers)
      L.W = L.W.unaryExpr([](double w) { return w + (w >= 0 ? 0.2 : -0.2); });
    const auto kind = kinds[trial % 5];
    const auto p = plan_for(m, kind);
    const double weight = 0.37;
    const auto e = penalty_value_and_subgradient(m, p, weight);
    auto value = [&] { return penalty_value_and_subgradient(m, p, weight).value; };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      Eigen::MatrixXd fd(m.layers[l].W.rows(), m.layers[l].W.cols());
      for (Eigen::Index i = 0; i < fd.size(); ++i) fd.data()[i] = central_difference(m.layers[l].W.data()[i], value);
      EXPECT_LT(relative_gap(fd, e.grad[l]), 1e-4) << to_string(kind) << " layer " << l;
    }
  }
}

TEST(Penalty, PlanShapeMismatchRejected) {
  MLPModel m = MLPModel::make(3, {4}, 2, Activation::ReLU, 0);
  MLPModel other = MLPModel::make(3, {5}, 2, Activation::ReLU, 0);
  EXPECT_THROW(penalty_value_and_subgradient(m, plan_for(other, PlanPenalty::L2), 1.0), Error);
}

TEST(Penalty, ProximalMapMinimizesItsObjective) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.0, 0.05);
  const PlanPenalty kinds[] = {PlanPenalty::L2, PlanPenalty::L1, PlanPenalty::GroupLasso,
                               PlanPenalty::ReversedGroupLasso, PlanPenalty::SparseGroupLasso};
  for (auto kind : kinds) {
    MLPModel m = MLPModel::make(4, {3}, 2, Activation::ReLU, 4);
    const auto p = plan_for(m, kind);
    const double step = 0.05;
    MLPModel prox = m;
    apply_penalty_prox(prox, p, step);
    // 0.5 |v - w|^2 + step * penalty(v), compared against random perturbations of the prox point.
    auto objective = [&](const MLPModel& v) {
      double s = 0.0;
      for (std::size_t l = 0; l < v.layers.size(); ++l) s += 0.5 * (v.layers[l].W - m.layers[l].W).squaredNorm();
      return s + penalty_value_and_subgradient(v, p, step).value;
    };
    const double best = objective(prox);
    for (int k = 0; k < 200; ++k) {
      MLPModel q = prox;
      for (auto& L : q.layers) L.W = L.W.unaryExpr([&](double w) { return w + z(rng); });
      EXPECT_GE(objective(q), best - 1e-12) << to_string(kind);
    }
  }
}

TEST(Prune, ThresholdRules) {
  MLPModel m = MLPModel::make(2, {3}, 2, Activation::ReLU, 0);
  m.layers[0].W.setConstant(0.0005 / std::sqrt(2.0));
  EXPECT_EQ(prune_step(m, PlanPenalty::GroupLasso, 1e-3), 3);
  EXPECT_EQ(m.alive_counts()[0], 0);

  MLPModel e = MLPModel::make(1, {2}, 2, Activation::ReLU, 0);
  e.layers[0].W << 0.001, 1.0;
  EXPECT_EQ(prune_step(e, PlanPenalty::L2, 0.001), 1);
  EXPECT_EQ(e.layers[0].alive[0], 0);

  MLPModel mixed = MLPModel::make(1, {2}, 2, Activation::ReLU, 0);
  mixed.layers[0].W << 0.0001, 1.0;
  EXPECT_EQ(prune_step(mixed, PlanPenalty::L1, 0.001), 1);
  EXPECT_EQ(mixed.alive_counts()[0], 1);
  EXPECT_EQ(mixed.layers[1].W.col(0).norm(), 0.0);
}

TEST(Prune, ReversedRuleUsesOutgoingColumns) {
  MLPModel m = MLPModel::make(2, {3}, 2, Activation::ReLU, 0);
  m.layers[1].W.col(1).setConstant(1e-4);
  EXPECT_EQ(prune_step(m, PlanPenalty::ReversedGroupLasso, 1e-3), 1);
  EXPECT_EQ(m.layers[0].alive[1], 0);
  EXPECT_EQ(m.layers[0].W.row(1).norm(), 0.0);
  EXPECT_EQ(prune_step(m, PlanPenalty::GroupLasso, 1e-3), 0);
}

TEST(Train, ZeroLambdaNeverPrunes) {
  auto d = make_synthetic_dataset(300, 5, 2, 1.0, 8);
  MLPModel m = MLPModel::make(5, {8, 4}, 2, Activation::ReLU, 8);
  auto p = plan_for(m, PlanPenalty::GroupLasso, static_cast<long>(d.train.size()), 32, 0.0);
  auto rep = train_two_phase(m, d, p, quick_config(8));
  EXPECT_EQ(rep.hidden_pruned_fraction(), 0.0);
  for (const auto& e : rep.phase_log) EXPECT_EQ(e.penalty, 0.0);
  ASSERT_GE(rep.phase1_epochs, 10);
}

TEST(Train, MaskMonotonicityOverFiveSeeds) {
  auto d = make_synthetic_dataset(400, 6, 3, 1.5, 11);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MLPModel m = MLPModel::make(6, {16, 8}, 3, Activation::ReLU, seed);
    auto p = plan_for(m, PlanPenalty::GroupLasso, static_cast<long>(d.train.size()), 32);
    auto rep = train_two_phase(m, d, p, quick_config(seed));
    long prev = -1;
    for (const auto& e : rep.phase_log) {
      if (e.phase == 1) {
        if (prev >= 0) EXPECT_LE(e.alive_weights, prev) << "seed " << seed << " epoch " << e.epoch;
      } else {
        EXPECT_EQ(e.alive_weights, prev) << "seed " << seed << " epoch " << e.epoch;
      }
      prev = e.alive_weights;
    }
  }
}

TEST(Train, PenaltyBookkeepingWithFrozenWeights) {
  auto d = make_synthetic_dataset(500, 4, 2, 1.0, 12);
  for (auto kind : {PlanPenalty::L2, PlanPenalty::L1, PlanPenalty::GroupLasso, PlanPenalty::ReversedGroupLasso}) {
    MLPModel m = MLPModel::make(4, {6}, 2, Activation::Tanh, 12);
    auto p = plan_for(m, kind, static_cast<long>(d.train.size()), 33);
    const double expected = penalty_value_and_subgradient(m, p, p.global_lambda).value;
    auto cfg = quick_config(12, 1);
    auto rep = train_two_phase(m, d, p, cfg, 0.0);
    ASSERT_FALSE(rep.phase_log.empty());
    EXPECT_NEAR(rep.phase_log.front().penalty, expected, 1e-6 * expected) << to_string(kind);
  }
}

TEST(Train, BitIdenticalReruns) {
  auto d = make_synthetic_dataset(300, 5, 3, 1.0, 13);
  auto run = [&] {
    MLPModel m = MLPModel::make(5, {8, 4}, 3, Activation::ReLU, 13);
    auto p = plan_for(m, PlanPenalty::GroupLasso, static_cast<long>(d.train.size()), 16);
    return train_two_phase(m, d, p, quick_config(13, 5));
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.phase_log.size(), b.phase_log.size());
  for (std::size_t i = 0; i < a.phase_log.size(); ++i) {
    EXPECT_EQ(a.phase_log[i].train_loss, b.phase_log[i].train_loss);
    EXPECT_EQ(a.phase_log[i].val_acc, b.phase_log[i].val_acc);
    EXPECT_EQ(a.phase_log[i].alive, b.phase_log[i].alive);
  }
  EXPECT_EQ(a.final_test_acc, b.final_test_acc);
  EXPECT_EQ(a.final_param_count, b.final_param_count);
}

TEST(Train, HugeLambdaPrunesNearlyEverything) {
  auto d = make_synthetic_dataset(400, 5, 2, 1.0, 14);
  MLPModel m = MLPModel::make(5, {16, 8}, 2, Activation::ReLU, 14);
  auto p = plan_for(m, PlanPenalty::GroupLasso, static_cast<long>(d.train.size()), 32);
  p.global_lambda *= 1e6;
  auto rep = train_two_phase(m, d, p, quick_config(14));
  EXPECT_GE(rep.hidden_pruned_fraction(), 0.9);
}

TEST(Train, DivergenceIsReported) {
  auto d = make_synthetic_dataset(200, 4, 2, 1.0, 15);
  MLPModel m = MLPModel::make(4, {6}, 2, Activation::ReLU, 15);
  auto p = plan_for(m, PlanPenalty::L2, static_cast<long>(d.train.size()), 32);
  p.global_lambda = 1e3;
  auto cfg = quick_config(15);
  cfg.penalty_step = PenaltyStep::Subgradient;
  EXPECT_THROW(
      {
        try {
          train_two_phase(m, d, p, cfg, 1.0);
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), ErrorKind::Divergence);
          throw;
        }
      },
      Error);
}

TEST(Train, InvalidConfigRejected) {
  TrainConfig c;
  c.patience = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.prune_threshold = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

// Seed-42 fixture: values recorded from the first passing run of this build.
TEST(Train, GroupLassoFixtureSeed42) {
  const auto d = fixture_dataset();
  const long n = static_cast<long>(d.train.size());
  TrainConfig cfg;
  cfg.seed = 42;
  MLPModel base = MLPModel::make(20, {64, 32}, 4, Activation::ReLU, 42);
  auto p0 = plan(architecture_of(base, n, 32), PlanPenalty::GroupLasso, Scheme::Bayesian);
  p0.global_lambda = 0.0;
  const auto baseline = train_two_phase(base, d, p0, cfg);
  MLPModel pen = MLPModel::make(20, {64, 32}, 4, Activation::ReLU, 42);
  const auto p = plan(architecture_of(pen, n, 32), PlanPenalty::GroupLasso, Scheme::Bayesian);
  const auto rep = train_two_phase(pen, d, p, cfg);
  EXPECT_GE(rep.hidden_pruned_fraction(), 0.30);
  EXPECT_LE(std::abs(rep.final_test_acc - baseline.final_test_acc), 0.05);
  EXPECT_EQ(rep.final_alive, (std::vector<int>{4, 4}));
  EXPECT_NEAR(rep.final_test_acc, 140.0 / 150.0, 1e-12);
  EXPECT_NEAR(baseline.final_test_acc, 139.0 / 150.0, 1e-12);
}

TEST(Sweep, OneValueOneRateRunsThreeTimes) {
  auto d = make_synthetic_dataset(200, 4, 2, 1.0, 16);
  ArchitectureSpec arch{{{1, 6, 4}, {2, 2, 6}}, static_cast<long>(d.train.size()), 16};
  auto cfg = quick_config(16, 5);
  auto res = lambda_sweep(d, arch, PlanPenalty::GroupLasso, Scheme::Bayesian, {1.0 / 140.0}, cfg);
  EXPECT_EQ(res.training_runs, 3);
  ASSERT_EQ(res.entries.size(), 1u);
  EXPECT_EQ(res.entries[0].runs.size(), 3u);
  EXPECT_EQ(res.entries[0].runs[1].seed, 17u);
  cfg.learning_rates = {1e-2, 1e-3};
  EXPECT_EQ(lambda_sweep(d, arch, PlanPenalty::L1, Scheme::Usual, {1e-4, 1e-3}, cfg).training_runs, 8);
  EXPECT_THROW(lambda_sweep(d, arch, PlanPenalty::L1, Scheme::Usual, {}, cfg), Error);
}

TEST(Sweep, DefaultGrids) {
  const auto b = default_sweep_grid(Scheme::Bayesian, 1000);
  ASSERT_EQ(b.size(), 7u);
  EXPECT_DOUBLE_EQ(b.front(), std::pow(10.0, -2.5) / 1000.0);
  EXPECT_DOUBLE_EQ(b.back(), std::pow(10.0, 0.5) / 1000.0);
  const auto u = default_sweep_grid(Scheme::Usual, 1000);
  ASSERT_EQ(u.size(), 8u);
  EXPECT_DOUBLE_EQ(u.front(), 1e-6);
  EXPECT_DOUBLE_EQ(u.back(), std::pow(10.0, -2.5));
  for (std::size_t i = 1; i < u.size(); ++i) EXPECT_NEAR(u[i] / u[i - 1], std::sqrt(10.0), 1e-12);
}

TEST(Sweep, BayesianAndUsualReportsAreWellFormed) {
  auto d = make_synthetic_dataset(300, 5, 3, 1.5, 18);
  const long n = static_cast<long>(d.train.size());
  ArchitectureSpec arch{{{1, 8, 5}, {2, 3, 8}}, n, 32};
  auto cfg = quick_config(18, 5);
  auto usual = lambda_sweep(d, arch, PlanPenalty::GroupLasso, Scheme::Usual, default_sweep_grid(Scheme::Usual, n), cfg);
  auto bayes = lambda_sweep(d, arch, PlanPenalty::GroupLasso, Scheme::Bayesian, {1.0 / n}, cfg);
  for (const auto* r : {&usual, &bayes})
    for (const auto& e : r->entries) {
      EXPECT_GE(e.mean_test_acc, 0.0);
      EXPECT_LE(e.mean_test_acc, 1.0);
      EXPECT_GT(e.mean_param_count, -1.0);
      for (const auto& run : e.runs) EXPECT_EQ(run.plan_used.global_lambda, e.global_lambda);
    }
}
