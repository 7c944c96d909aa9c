// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Tolerances are fixed constants below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nonreactive.hpp"

#ifndef NONREACTIVE_TEST_DATA
#define NONREACTIVE_TEST_DATA "tests/data"
#endif

namespace nr = nonreactive;
using nr::Context;
using nr::Matrix;
using nr::Rng;
using nr::Vector;

namespace {

constexpr double kRidgeRelTol = 1e-8;
constexpr double kMonotoneTol = 1e-8;
constexpr double kScalarDelta = 0.05;
constexpr std::size_t kScalarTrials = 10000;
constexpr std::size_t kScalarHorizon = 100;
constexpr double kSplitLow = 0.4, kSplitHigh = 0.6;
constexpr double kScalingRatio = 0.65;
constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<Context> draw(const nr::BanditInstance& inst, std::size_t n, Rng& rng) {
  std::vector<Context> out(n);
  for (auto& c : out) c = inst.draw_context(rng);
  return out;
}

// 1. Ridge estimate against the stacked least-squares problem [Phi; sqrt(lambda) I] solved by QR.
Outcome ridge_oracle() {
  Rng rng(kSeed + 1);
  std::uniform_int_distribution<std::size_t> dim(1, 20), count(1, 500);
  std::uniform_real_distribution<double> log_lambda(std::log(0.01), std::log(100.0));
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t d = dim(rng), n = count(rng);
    const double lambda = std::exp(log_lambda(rng));
    nr::InteractionDataset data(d);
    const auto D = static_cast<Eigen::Index>(d), Nn = static_cast<Eigen::Index>(n);
    Matrix stacked = Matrix::Zero(Nn + D, D);
    Vector rhs = Vector::Zero(Nn + D);
    for (std::size_t i = 0; i < n; ++i) {
      Vector phi(D);
      for (auto& v : phi) v = g(rng);
      phi /= std::max(1.0, phi.norm());
      const double r = g(rng);
      data.push_back(nr::InteractionRecord{i, 0, phi, r});
      stacked.row(static_cast<Eigen::Index>(i)) = phi.transpose();
      rhs(static_cast<Eigen::Index>(i)) = r;
    }
    stacked.bottomRows(D) = std::sqrt(lambda) * Matrix::Identity(D, D);
    const Vector oracle = stacked.colPivHouseholderQr().solve(rhs);
    const Vector got = nr::ridge_fit(data, lambda).theta_hat;
    const double rel = (got - oracle).norm() / std::max(oracle.norm(), 1e-300);
    worst = std::max(worst, rel);
  }
  std::ostringstream s;
  s << "worst relative error " << worst << " over 100 instances (tol " << kRidgeRelTol << ")";
  return {worst <= kRidgeRelTol, s.str()};
}

struct SweepDraw {
  std::size_t d, A, M;
  double lambda;
};

SweepDraw sweep_draw(Rng& rng, double min_lambda, std::size_t max_m) {
  std::uniform_int_distribution<std::size_t> dim(1, 10), actions(2, 12), steps(1, max_m);
  std::uniform_real_distribution<double> log_lambda(std::log(min_lambda), std::log(20.0));
  SweepDraw p{dim(rng), actions(rng), steps(rng), std::exp(log_lambda(rng))};
  p.M = std::max<std::size_t>(p.M, static_cast<std::size_t>(std::ceil(p.lambda)));
  return p;
}

// 2. Snapshot count against d log2(1 + M / (d lambda)).
Outcome switch_count() {
  Rng rng(kSeed + 2);
  std::size_t violations = 0, refresh_violations = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (int run = 0; run < 200; ++run) {
    const auto p = sweep_draw(rng, 0.1, 1000);
    const auto inst = nr::make_unit_ball_instance(p.d, p.A, rng());
    Rng ctx_rng(rng());
    const auto planned = nr::plan(draw(inst, p.M, ctx_rng), nr::PlannerConfig{p.lambda, 1.0, false});
    const double bound =
        static_cast<double>(p.d) * std::log2(1.0 + static_cast<double>(p.M) / (static_cast<double>(p.d) * p.lambda));
    const double K = static_cast<double>(planned.policy.num_phases());
    if (K > bound) ++violations;
    if (K - 1.0 > bound) ++refresh_violations;
    tightest = std::min(tightest, bound - K);
  }
  std::ostringstream s;
  s << violations << "/200 runs have more snapshots than the bound; smallest slack " << tightest << "; "
    << refresh_violations << "/200 runs have more refreshes (snapshots - 1) than the bound";
  return {violations == 0, s.str()};
}

double max_uncertainty_dense(const Matrix& sigma_inv, const Context& ctx) {
  double best = 0.0;
  for (Eigen::Index a = 0; a < ctx.features.rows(); ++a) {
    const Vector phi = ctx.features.row(a).transpose();
    best = std::max(best, std::sqrt(std::max(0.0, phi.dot(sigma_inv * phi))));
  }
  return best;
}

// 3. Per-context max-uncertainty is non-increasing across snapshots (dense inverses).
Outcome decreasing_uncertainty() {
  Rng rng(kSeed + 3);
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  for (int run = 0; run < 100; ++run) {
    const auto p = sweep_draw(rng, 0.1, 600);
    const auto inst = nr::make_unit_ball_instance(p.d, p.A, rng());
    Rng ctx_rng(rng());
    const auto planned = nr::plan(draw(inst, p.M, ctx_rng), nr::PlannerConfig{p.lambda, 1.0, false});
    const auto probe = draw(inst, 50, ctx_rng);
    std::vector<Matrix> inverses;
    for (const auto& s : planned.policy.snapshots()) inverses.push_back(s.matrix().inverse());
    bool ok = true;
    for (const auto& ctx : probe) {
      double prev = max_uncertainty_dense(inverses[0], ctx);
      for (std::size_t k = 1; k < inverses.size(); ++k) {
        const double cur = max_uncertainty_dense(inverses[k], ctx);
        worst = std::max(worst, cur - prev);
        if (cur > prev + kMonotoneTol) ok = false;
        prev = cur;
      }
    }
    if (!ok) ++violations;
  }
  std::ostringstream s;
  s << violations << "/100 runs with an increase; largest step change " << worst << " (tol " << kMonotoneTol << ")";
  return {violations == 0, s.str()};
}

// 4. Squared elliptical potential on planner sequences with lambda >= 1.
Outcome elliptical_potential() {
  Rng rng(kSeed + 4);
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  std::uniform_real_distribution<double> alpha_draw(0.1, 1.0);
  for (int run = 0; run < 100; ++run) {
    const auto p = sweep_draw(rng, 1.0, 1000);
    const double alpha = alpha_draw(rng);
    const auto inst = nr::make_unit_ball_instance(p.d, p.A, rng());
    Rng ctx_rng(rng());
    const auto planned = nr::plan(draw(inst, p.M, ctx_rng), nr::PlannerConfig{p.lambda, alpha, false});
    const auto res = nr::potential_check(nr::scaled_planner_features(planned), p.lambda);
    if (!res.pass) ++violations;
    if (res.rhs > 0.0) worst_ratio = std::max(worst_ratio, res.lhs / res.rhs);
  }
  std::ostringstream s;
  s << violations << "/100 runs fail; largest lhs/rhs " << worst_ratio;
  return {violations == 0, s.str()};
}

// 5. Reverse Bernstein coverage on adapted Bernoulli families.
Outcome reverse_bernstein() {
  namespace pr = nr::processes;
  const std::vector<nr::ProcessFamily> families{pr::iid_bernoulli(0.3), pr::sticky_bernoulli(),
                                                pr::running_mean_bernoulli(), pr::context_driven_bernoulli()};
  const double threshold = kScalarDelta + 3.0 * std::sqrt(kScalarDelta / static_cast<double>(kScalarTrials));
  bool pass = true;
  std::ostringstream s;
  s << "threshold " << threshold << ";";
  std::uint64_t seed = kSeed + 5;
  for (const auto& f : families) {
    const auto rep = nr::coverage_test(f, nr::ScalarBound::reverse_bernstein, kScalarHorizon, kScalarTrials,
                                       kScalarDelta, seed++);
    pass = pass && rep.rate() <= threshold;
    s << ' ' << f.name << '=' << rep.rate();
  }
  return {pass, s.str()};
}

// 6. Offline and online sandwich on the two-coordinate hard instance.
Outcome covariance_sandwich() {
  const std::size_t d = 2;
  nr::SandwichConfig cfg;
  cfg.N = 20;
  cfg.delta = 0.05;
  cfg.lambda_reg = 24.0 * std::log(8.0 * static_cast<double>(d) / cfg.delta);
  cfg.M = nr::offline_requirement(d, cfg.N, cfg.lambda_reg, cfg.delta);
  cfg.trials = 200;
  cfg.mc_contexts = 100000;
  cfg.tol = 1e-6;
  const auto rep = nr::sandwich_check(nr::make_hard_uniform(10), cfg, kSeed + 6);
  const double threshold =
      cfg.delta / 4.0 + 3.0 * std::sqrt(cfg.delta / 4.0 / static_cast<double>(cfg.trials));
  std::ostringstream s;
  s << "M=" << cfg.M << " N=" << cfg.N << " lambda=" << cfg.lambda_reg << "; offline rate " << rep.offline.rate()
    << ", online rate " << rep.online.rate() << " (threshold " << threshold << "); worst margins "
    << rep.worst_offline_margin << ", " << rep.worst_online_margin;
  return {rep.offline.rate() <= threshold && rep.online.rate() <= threshold, s.str()};
}

// 7. Planner mass on the lone first-coordinate action.
Outcome hard_split() {
  const auto inst = nr::make_hard_uniform(10);
  Rng rng(kSeed + 7);
  const auto planned = nr::plan(draw(inst, 2000, rng), nr::PlannerConfig{1.0, 1.0, false});
  double planner = 0.0;
  for (auto a : planned.trace.actions) planner += a == 0;
  planner /= 2000.0;
  Rng sample_rng(kSeed + 8);
  const auto online = nr::sample(planned.policy, inst, 20000, sample_rng);
  const auto random = nr::sample(nr::UniformRandomPolicy{}, inst, 20000, sample_rng);
  const double replay = nr::emit_action_histogram(online, 10).frequencies[0];
  const double uniform = nr::emit_action_histogram(random, 10).frequencies[0];
  std::ostringstream s;
  s << "planner frequency " << planner << " (mixture replay " << replay << "), uniform random " << uniform;
  return {planner >= kSplitLow && planner <= kSplitHigh, s.str()};
}

// 8. Final-point ordering on the synthetic instance.
Outcome synthetic_ordering() {
  nr::RunConfig cfg;
  cfg.environment = nr::EnvironmentKind::synthetic;
  cfg.algorithms = {nr::Algorithm::planner_sampler, nr::Algorithm::random, nr::Algorithm::largest_norm,
                    nr::Algorithm::single_action, nr::Algorithm::supervised_oracle};
  cfg.experiment.N = 10000;
  cfg.experiment.M = 10000;
  cfg.experiment.alpha = 1.0;
  cfg.experiment.lambda_reg = 1.0;
  cfg.experiment.seed = kSeed + 9;
  cfg.n_trials = 20;
  cfg.eval_every = 1000;
  cfg.eval_set_size = 2000;
  cfg.sl_samples = 10000;
  cfg.evaluate_uncertainty = false;
  const auto res = nr::run_experiment(cfg);
  const auto summary = nr::summarize(res.rows);
  auto final = [&](nr::Algorithm a) { return *nr::final_point(summary, a); };
  const auto sp = final(nr::Algorithm::planner_sampler);
  const auto sl = final(nr::Algorithm::supervised_oracle);
  bool pass = sl.policy_value_mean >= sp.policy_value_mean;
  std::ostringstream s;
  s << "S-P " << sp.policy_value_mean << "+-" << sp.policy_value_se << ", SL " << sl.policy_value_mean << "+-"
    << sl.policy_value_se;
  const std::vector<nr::Algorithm> others{nr::Algorithm::random, nr::Algorithm::largest_norm,
                                          nr::Algorithm::single_action};
  auto beats = [](const nr::SummaryPoint& a, const nr::SummaryPoint& b) {
    return a.policy_value_mean - b.policy_value_mean >=
           std::sqrt(a.policy_value_se * a.policy_value_se + b.policy_value_se * b.policy_value_se);
  };
  for (auto a : others) {
    const auto p = final(a);
    pass = pass && beats(sp, p);
    s << ", " << nr::to_string(a) << ' ' << p.policy_value_mean << "+-" << p.policy_value_se;
  }
  // Informational: evaluation points at which S-P leads every baseline by a pooled standard error.
  s << "; S-P leads at n =";
  for (const auto& p : summary) {
    if (p.algorithm != nr::Algorithm::planner_sampler) continue;
    bool lead = true;
    for (const auto& q : summary) {
      if (q.n_samples_seen == p.n_samples_seen && std::find(others.begin(), others.end(), q.algorithm) != others.end()) {
        lead = lead && beats(p, q);
      }
    }
    if (lead) s << ' ' << p.n_samples_seen;
  }
  return {pass, s.str()};
}

// 9. Expected max uncertainty after N and 4N online samples.
Outcome uncertainty_scaling() {
  auto run = [](std::size_t N) {
    nr::RunConfig cfg;
    cfg.environment = nr::EnvironmentKind::synthetic;
    cfg.algorithms = {nr::Algorithm::planner_sampler};
    cfg.experiment.N = N;
    cfg.experiment.M = N;
    cfg.experiment.alpha = 1.0;
    cfg.experiment.lambda_reg = 1.0;
    cfg.experiment.seed = kSeed + 10;
    cfg.n_trials = 10;
    cfg.eval_every = N;
    cfg.eval_set_size = 2000;
    const auto summary = nr::summarize(nr::run_experiment(cfg).rows);
    return *nr::final_point(summary, nr::Algorithm::planner_sampler)->uncertainty_mean;
  };
  const double u1 = run(2000), u4 = run(8000);
  std::ostringstream s;
  s << "u(2000)=" << u1 << " u(8000)=" << u4 << " ratio " << u4 / u1 << " (limit " << kScalingRatio << ")";
  return {u4 <= kScalingRatio * u1, s.str()};
}

// 10. Fixture ingestion against the golden JSON, compared bit for bit.
Outcome ingestion_roundtrip() {
  const std::string dir = NONREACTIVE_TEST_DATA;
  const auto golden = nr::read_json_file(dir + "/ltr_fixture_golden.json");
  const auto indices = golden.at("indices").get<std::vector<std::size_t>>();
  std::ifstream in(dir + "/ltr_fixture.txt");
  if (!in) return {false, "fixture file missing"};
  const auto split = nr::ingest_rank_stream(in, nr::RankDatasetSpec{}, indices);

  std::vector<std::string> problems;
  if (split.rows_read != golden.at("rows_read").get<std::size_t>()) problems.push_back("rows_read");
  if (split.rows_truncated != golden.at("rows_truncated").get<std::size_t>()) problems.push_back("rows_truncated");
  if (split.warnings.size() != golden.at("skipped_qids").size()) problems.push_back("skipped queries");
  const auto& gc = golden.at("contexts");
  if (split.contexts.size() != gc.size()) {
    problems.push_back("context count");
  } else {
    for (std::size_t i = 0; i < gc.size(); ++i) {
      const Context& c = split.contexts[i];
      const auto& g = gc[i];
      if (c.id != g.at("qid").get<std::uint64_t>()) problems.push_back("qid " + std::to_string(i));
      if (c.num_actions() != g.at("actions").get<std::size_t>()) problems.push_back("actions " + std::to_string(i));
      if (c.features.rowwise().norm().maxCoeff() > 1.0 + 1e-12) problems.push_back("norm " + std::to_string(i));
      const auto& rows = g.at("features");
      const auto& rel = g.at("relevance");
      if (rows.size() != c.num_actions() || rel.size() != c.num_actions()) continue;
      for (std::size_t a = 0; a < c.num_actions(); ++a) {
        const auto row = rows[a].get<std::vector<double>>();
        bool same = row.size() == static_cast<std::size_t>(c.features.cols());
        for (std::size_t j = 0; same && j < row.size(); ++j) {
          same = row[j] == c.features(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j));
        }
        if (!same) problems.push_back("features q" + std::to_string(i) + " a" + std::to_string(a));
        if ((*c.mean_rewards)(static_cast<Eigen::Index>(a)) != rel[a].get<double>()) {
          problems.push_back("relevance q" + std::to_string(i) + " a" + std::to_string(a));
        }
      }
    }
  }
  std::ostringstream s;
  s << split.contexts.size() << " contexts, " << split.rows_read << " rows, " << split.rows_truncated << " truncated";
  for (const auto& p : problems) s << "; mismatch: " << p;
  return {problems.empty(), s.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"ridge oracle equivalence", ridge_oracle},
      {"switch-count bound", switch_count},
      {"decreasing uncertainty", decreasing_uncertainty},
      {"elliptical potential (squared)", elliptical_potential},
      {"reverse Bernstein coverage", reverse_bernstein},
      {"covariance sandwich", covariance_sandwich},
      {"hard-instance exploration split", hard_split},
      {"synthetic policy-value ordering", synthetic_ordering},
      {"uncertainty scaling", uncertainty_scaling},
      {"ingestion round trip", ingestion_roundtrip},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::chrono::duration<double> secs = std::chrono::steady_clock::now() - start;
    if (!o.pass) ++failures;
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), secs.count());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
