#include "nonreactive/estimator.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "nonreactive/baselines.hpp"
#include "nonreactive/environments.hpp"
#include "nonreactive/sampler.hpp"

namespace {

using nonreactive::ConfigError;
using nonreactive::Context;
using nonreactive::DataError;
using nonreactive::InteractionDataset;
using nonreactive::InteractionRecord;
using nonreactive::Matrix;
using nonreactive::RadiusBranch;
using nonreactive::RidgeEstimate;
using nonreactive::Rng;
using nonreactive::Vector;
using ::testing::DoubleNear;

InteractionDataset random_dataset(std::size_t d, std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  InteractionDataset data(d);
  for (std::size_t i = 0; i < n; ++i) {
    Vector phi(static_cast<Eigen::Index>(d));
    for (auto& v : phi) v = g(rng);
    phi /= std::max(1.0, phi.norm());
    data.push_back(InteractionRecord{i, 0, phi, g(rng)});
  }
  return data;
}

Vector normal_equation_oracle(const InteractionDataset& data, double lambda) {
  const auto d = static_cast<Eigen::Index>(data.dim());
  Matrix phi(static_cast<Eigen::Index>(data.size()), d);
  Vector r(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    phi.row(static_cast<Eigen::Index>(i)) = data[i].feature.transpose();
    r(static_cast<Eigen::Index>(i)) = data[i].reward;
  }
  const Matrix a = phi.transpose() * phi + lambda * Matrix::Identity(d, d);
  return a.fullPivLu().solve(phi.transpose() * r);
}

TEST(RidgeFit, EmptyDatasetGivesZero) {
  const auto est = nonreactive::ridge_fit(InteractionDataset(3), 1.0);
  EXPECT_EQ(est.theta_hat, Vector::Zero(3));
  EXPECT_EQ(est.n_samples, 0u);
}

TEST(RidgeFit, SingleRecord) {
  InteractionDataset data(3);
  data.push_back(InteractionRecord{0, 0, Vector::Unit(3, 0), 1.0});
  const auto est = nonreactive::ridge_fit(data, 1.0);
  EXPECT_THAT(est.theta_hat(0), DoubleNear(0.5, 1e-15));
  EXPECT_EQ(est.theta_hat(1), 0.0);
  EXPECT_EQ(est.theta_hat(2), 0.0);
}

TEST(RidgeFit, MatchesNormalEquations) {
  Rng rng(10);
  const auto data = random_dataset(10, 500, rng);
  for (double lambda : {0.01, 1.0, 30.0}) {
    const auto est = nonreactive::ridge_fit(data, lambda);
    const Vector oracle = normal_equation_oracle(data, lambda);
    EXPECT_LT((est.theta_hat - oracle).norm() / oracle.norm(), 1e-8) << "lambda=" << lambda;
  }
}

TEST(RidgeFit, NonFiniteRewardIsDataError) {
  InteractionDataset data(2);
  data.push_back(InteractionRecord{0, 0, Vector::Unit(2, 0), std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(nonreactive::ridge_fit(data, 1.0), DataError);
}

TEST(RidgeAccumulator, FitOnPrefixMatchesBatch) {
  Rng rng(2);
  const auto data = random_dataset(4, 100, rng);
  nonreactive::RidgeAccumulator acc(4, 0.5);
  for (std::size_t n = 0; n < data.size(); ++n) {
    acc.add(data[n]);
    if ((n + 1) % 25 == 0) {
      const auto batch = nonreactive::ridge_fit(data.prefix(n + 1), 0.5);
      EXPECT_LT((acc.fit().theta_hat - batch.theta_hat).norm(), 1e-12);
    }
  }
}

TEST(GreedyAction, Examples) {
  Context c;
  c.features = Matrix::Identity(2, 2);
  EXPECT_EQ(nonreactive::greedy_action(Vector::Unit(2, 0), c), 0u);
  EXPECT_EQ(nonreactive::greedy_action(Vector::Zero(2), c), 0u);
}

TEST(GreedyAction, MatchesScan) {
  Rng rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Context c;
    c.features.resize(20, 6);
    for (Eigen::Index i = 0; i < c.features.size(); ++i) c.features.data()[i] = g(rng);
    Vector theta(6);
    for (auto& v : theta) v = g(rng);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < 20; ++a) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < 6; ++j) s += c.features(a, j) * theta(j);
      if (s > best_score) {
        best_score = s;
        best = static_cast<std::size_t>(a);
      }
    }
    EXPECT_EQ(nonreactive::greedy_action(theta, c), best);
  }
}

TEST(GreedyAction, InvariantUnderPositiveRewardScaling) {
  Rng rng(3);
  const auto data = random_dataset(5, 80, rng);
  InteractionDataset scaled(5);
  for (auto r : data.records()) {
    r.reward *= 3.7;
    scaled.push_back(r);
  }
  const auto a = nonreactive::ridge_fit(data, 1.0);
  const auto b = nonreactive::ridge_fit(scaled, 1.0);
  EXPECT_LT((b.theta_hat - 3.7 * a.theta_hat).norm(), 1e-12);
  const auto inst = nonreactive::make_unit_ball_instance(5, 12, 4);
  Rng ctx_rng(5);
  for (int i = 0; i < 200; ++i) {
    const Context c = inst.draw_context(ctx_rng);
    EXPECT_EQ(nonreactive::greedy_action(a, c), nonreactive::greedy_action(b, c));
  }
}

TEST(BetaRadius, LargeSpaceOnly) {
  const auto r = nonreactive::beta_radius(1, std::nullopt, 1.0, 0.0);
  EXPECT_THAT(r.beta_sqrt, DoubleNear(2.0 * std::sqrt(2.0 * std::log(6.0)), 1e-12));
  EXPECT_THAT(r.beta_sqrt, DoubleNear(3.786, 1e-3));
  EXPECT_EQ(r.branch, RadiusBranch::large_space);
}

TEST(BetaRadius, SmallSpaceBranch) {
  const auto r = nonreactive::beta_radius(1, 1.0, 1.0, 0.0);
  ASSERT_TRUE(r.small_space_term.has_value());
  EXPECT_THAT(*r.small_space_term, DoubleNear(std::sqrt(2.0 * std::log(2.0)), 1e-12));
  EXPECT_THAT(r.beta_sqrt, DoubleNear(1.177, 1e-3));
  EXPECT_EQ(r.branch, RadiusBranch::small_space);
}

TEST(BetaRadius, RegularizationTermIsAdditive) {
  const auto base = nonreactive::beta_radius(7, 50.0, 0.05, 0.0, 1.0);
  const auto reg = nonreactive::beta_radius(7, 50.0, 0.05, 4.0, 1.0);
  EXPECT_THAT(reg.beta_sqrt - base.beta_sqrt, DoubleNear(2.0, 1e-12));
}

TEST(BetaRadius, RejectsBadDelta) {
  EXPECT_THROW(nonreactive::beta_radius(2, std::nullopt, 0.0, 1.0), ConfigError);
  EXPECT_THROW(nonreactive::beta_radius(2, std::nullopt, 1.5, 1.0), ConfigError);
}

RidgeEstimate estimate_with(Vector theta, double lambda = 1.0) {
  RidgeEstimate est{std::move(theta), nonreactive::RegularizedCovariance(2, lambda, 1.0), 0};
  return est;
}

TEST(Evaluate, ExactEstimateHasNoGap) {
  const auto inst = nonreactive::make_synthetic(4);
  Rng rng(1);
  std::vector<Context> eval(500);
  for (auto& c : eval) c = inst.draw_context(rng);
  RidgeEstimate est{inst.theta_star, nonreactive::RegularizedCovariance(20, 1.0, 1.0), 0};
  const auto rep = nonreactive::evaluate(est, inst, eval);
  EXPECT_EQ(rep.expected_suboptimality, 0.0);
  EXPECT_EQ(rep.n_eval_contexts, 500u);
}

TEST(Evaluate, ForcedWrongActionGapIsOne) {
  auto inst = nonreactive::make_hard_uniform(2, Vector::Unit(2, 0));
  Context c;
  c.features = Matrix::Identity(2, 2);
  const std::vector<Context> eval{c};
  const auto rep = nonreactive::evaluate(estimate_with(Vector::Unit(2, 1)), inst, eval);
  EXPECT_DOUBLE_EQ(rep.expected_suboptimality, 1.0);
  EXPECT_DOUBLE_EQ(rep.policy_value, 0.0);
}

TEST(Evaluate, EmptySetIsConfigError) {
  const auto inst = nonreactive::make_hard_uniform(2);
  EXPECT_THROW(nonreactive::evaluate(estimate_with(Vector::Zero(2)), inst, {}), ConfigError);
}

TEST(Evaluate, MatchesEnumerationAndInvariants) {
  const auto inst = nonreactive::make_unit_ball_instance(6, 9, 31);
  Rng rng(32);
  const auto data = nonreactive::sample(nonreactive::UniformRandomPolicy{}, inst, 200, rng);
  const auto est = nonreactive::ridge_fit(data, 1.0);
  std::vector<Context> eval(400);
  for (auto& c : eval) c = inst.draw_context(rng);
  const auto rep = nonreactive::evaluate(est, inst, eval);

  const Matrix sigma = est.sigma.matrix();
  const Matrix sigma_inv = sigma.inverse();
  const Vector err = inst.theta_star - est.theta_hat;
  const double err_norm = std::sqrt(err.dot(sigma * err));
  double gap = 0.0, unc = 0.0, pred = 0.0, value = 0.0;
  for (const auto& c : eval) {
    double best = -1e300, chosen = 0.0, best_hat = -1e300, max_u = 0.0, max_p = 0.0;
    for (Eigen::Index a = 0; a < c.features.rows(); ++a) {
      const Vector phi = c.features.row(a).transpose();
      const double mean = phi.dot(inst.theta_star);
      const double hat = phi.dot(est.theta_hat);
      if (hat > best_hat) {
        best_hat = hat;
        chosen = mean;
      }
      best = std::max(best, mean);
      const double u = std::sqrt(phi.dot(sigma_inv * phi));
      max_u = std::max(max_u, u);
      const double p = std::abs(phi.dot(err));
      max_p = std::max(max_p, p);
      EXPECT_LE(p, u * err_norm + 1e-12);
    }
    gap += best - chosen;
    value += chosen;
    unc += max_u;
    pred += max_p;
  }
  const double n = static_cast<double>(eval.size());
  EXPECT_THAT(rep.expected_suboptimality, DoubleNear(gap / n, 1e-12));
  EXPECT_THAT(rep.policy_value, DoubleNear(value / n, 1e-12));
  EXPECT_THAT(rep.expected_max_uncertainty, DoubleNear(unc / n, 1e-10));
  ASSERT_TRUE(rep.expected_max_prediction_error.has_value());
  EXPECT_THAT(*rep.expected_max_prediction_error, DoubleNear(pred / n, 1e-12));
  EXPECT_GE(rep.expected_suboptimality, -1e-8);
  EXPECT_LE(rep.expected_suboptimality, 2.0 * *rep.expected_max_prediction_error + 1e-12);
}

TEST(Evaluate, StandardErrorMatchesRecomputation) {
  const auto inst = nonreactive::make_synthetic(9);
  Rng rng(2);
  std::vector<Context> eval(300);
  for (auto& c : eval) c = inst.draw_context(rng);
  const auto est = estimate_with(Vector::Zero(20));
  RidgeEstimate zero{Vector::Zero(20), nonreactive::RegularizedCovariance(20, 1.0, 1.0), 0};
  const auto rep = nonreactive::evaluate(zero, inst, eval);
  std::vector<double> values;
  for (const auto& c : eval) values.push_back(inst.mean_reward(c, 0));
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double se = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  EXPECT_THAT(rep.policy_value, DoubleNear(mean, 1e-12));
  EXPECT_THAT(rep.policy_value_se, DoubleNear(se, 1e-10));
  (void)est;
}

}  // namespace
