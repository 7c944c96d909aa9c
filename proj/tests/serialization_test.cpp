#include "nonreactive/serialization.hpp"

#include <filesystem>
#include <sstream>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "nonreactive/baselines.hpp"
#include "nonreactive/environments.hpp"

namespace {

namespace fs = std::filesystem;
using nonreactive::Context;
using nonreactive::InteractionDataset;
using nonreactive::MixturePolicy;
using nonreactive::ParseError;
using nonreactive::PlannerConfig;
using nonreactive::Rng;

MixturePolicy planned_policy() {
  const auto inst = nonreactive::make_synthetic(3);
  Rng rng(4);
  std::vector<Context> contexts(400);
  for (auto& c : contexts) c = inst.draw_context(rng);
  return nonreactive::plan(contexts, PlannerConfig{0.7, 0.3}).policy;
}

void expect_same_policy(const MixturePolicy& a, const MixturePolicy& b) {
  EXPECT_EQ(a.dimension(), b.dimension());
  EXPECT_EQ(a.lambda_reg(), b.lambda_reg());
  EXPECT_EQ(a.alpha(), b.alpha());
  EXPECT_EQ(a.total_steps(), b.total_steps());
  EXPECT_EQ(a.phase_starts(), b.phase_starts());
  ASSERT_EQ(a.num_phases(), b.num_phases());
  for (std::size_t k = 0; k < a.num_phases(); ++k) {
    EXPECT_EQ(a.snapshot(k).matrix(), b.snapshot(k).matrix());
    EXPECT_EQ(a.snapshot(k).log_det(), b.snapshot(k).log_det());
  }
}

InteractionDataset some_data() {
  const auto inst = nonreactive::make_unit_ball_instance(4, 5, 2);
  Rng rng(6);
  return nonreactive::sample(nonreactive::UniformRandomPolicy{}, inst, 120, rng);
}

void expect_same_data(const InteractionDataset& a, const InteractionDataset& b) {
  ASSERT_EQ(a.dim(), b.dim());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].context_id, b[i].context_id);
    EXPECT_EQ(a[i].action_index, b[i].action_index);
    EXPECT_EQ(a[i].feature, b[i].feature);
    EXPECT_EQ(a[i].reward, b[i].reward);
  }
}

TEST(PolicyJson, RoundTripIsBitExact) {
  const auto p = planned_policy();
  const auto j = nonreactive::policy_to_json(p);
  const auto text = j.dump();
  expect_same_policy(p, nonreactive::policy_from_json(nonreactive::json::parse(text)));
  EXPECT_EQ(j.at("version"), nonreactive::kPolicyFormatVersion);
}

TEST(PolicyBinary, RoundTripIsBitExact) {
  const auto p = planned_policy();
  std::stringstream buf;
  nonreactive::write_policy_binary(buf, p);
  expect_same_policy(p, nonreactive::read_policy_binary(buf));
}

TEST(PolicyBinary, RejectsWrongMagic) {
  std::stringstream buf("NOTAPOLICY......");
  EXPECT_THROW(nonreactive::read_policy_binary(buf), ParseError);
}

TEST(PolicyFiles, ExtensionSelectsFormat) {
  const auto p = planned_policy();
  const fs::path dir = fs::temp_directory_path() / "nonreactive_ser_test";
  fs::create_directories(dir);
  for (const char* name : {"p.json", "p.bin"}) {
    nonreactive::save_policy(dir / name, p);
    expect_same_policy(p, nonreactive::load_policy(dir / name));
  }
  fs::remove_all(dir);
}

TEST(DatasetCsv, RoundTripIsBitExact) {
  const auto data = some_data();
  std::stringstream buf;
  nonreactive::write_dataset_csv(buf, data);
  expect_same_data(data, nonreactive::read_dataset_csv(buf));
}

TEST(DatasetCsv, ReportsLineOfBadRow) {
  std::stringstream buf("context_id,action_index,f0,reward\n1,0,0.5,1\n2,0,zz,1\n");
  try {
    nonreactive::read_dataset_csv(buf);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(DatasetBinary, RoundTripIsBitExact) {
  const auto data = some_data();
  std::stringstream buf;
  nonreactive::write_dataset_binary(buf, data);
  expect_same_data(data, nonreactive::read_dataset_binary(buf));
}

TEST(Contexts, RoundTripKeepsRelevance) {
  Context c;
  c.id = 77;
  c.features = Eigen::MatrixXd::Identity(3, 2) * 0.25;
  c.mean_rewards = Eigen::VectorXd::LinSpaced(3, 0.0, 2.0);
  const std::vector<Context> in{c};
  const auto out = nonreactive::contexts_from_json(nonreactive::json::parse(nonreactive::contexts_to_json(in).dump()));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, 77u);
  EXPECT_EQ(out[0].features, c.features);
  EXPECT_EQ(*out[0].mean_rewards, *c.mean_rewards);
}

TEST(Estimate, RoundTripIsBitExact) {
  const auto est = nonreactive::ridge_fit(some_data(), 0.9);
  const auto back = nonreactive::estimate_from_json(nonreactive::json::parse(nonreactive::estimate_to_json(est).dump()));
  EXPECT_EQ(back.theta_hat, est.theta_hat);
  EXPECT_EQ(back.sigma.matrix(), est.sigma.matrix());
  EXPECT_EQ(back.n_samples, est.n_samples);
}

}  // namespace
