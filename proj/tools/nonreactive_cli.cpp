// Command-line front end for planning, sampling, fitting, evaluation and experiments.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nonreactive.hpp"

namespace nr = nonreactive;
namespace fs = std::filesystem;

namespace {

struct EnvOptions {
  std::string environment = "synthetic";
  std::uint64_t instance_seed = 0;
  std::size_t hard_actions = 10;
  std::size_t hard_k = 3;
  std::string contexts;  // context bundle; replaces the generated environment

  void add(CLI::App* app) {
    app->add_option("--env", environment, "synthetic | hard_uniform | hard_goptimal")
        ->check(CLI::IsMember({"synthetic", "hard_uniform", "hard_goptimal"}));
    app->add_option("--instance-seed", instance_seed, "Seed for the instance itself (theta*)");
    app->add_option("--hard-actions", hard_actions, "Action count of hard_uniform");
    app->add_option("--hard-k", hard_k, "k of hard_goptimal");
    app->add_option("--contexts", contexts, "Context bundle JSON used instead of a generated environment")
        ->check(CLI::ExistingFile);
  }

  std::shared_ptr<const std::vector<nr::Context>> bundle() const {
    if (contexts.empty()) return nullptr;
    return std::make_shared<const std::vector<nr::Context>>(nr::contexts_from_json(nr::read_json_file(contexts)));
  }

  nr::BanditInstance instance() const {
    if (auto pool = bundle()) return nr::make_pool_instance("bundle", pool, 0.0);
    switch (nr::parse_environment(environment)) {
      case nr::EnvironmentKind::synthetic: return nr::make_synthetic(instance_seed);
      case nr::EnvironmentKind::hard_uniform: return nr::make_hard_uniform(hard_actions);
      case nr::EnvironmentKind::hard_goptimal: return nr::make_hard_goptimal(hard_k);
      default: throw nr::ConfigError("environment not available here: " + environment);
    }
  }

  nr::json echo() const {
    return {{"environment", contexts.empty() ? environment : "bundle"},
            {"instance_seed", instance_seed},
            {"hard_actions", hard_actions},
            {"hard_k", hard_k},
            {"contexts", contexts}};
  }
};

std::vector<nr::Context> draw_or_load(const EnvOptions& env, std::size_t n, std::uint64_t seed,
                                      std::uint64_t stream) {
  if (auto pool = env.bundle()) {
    if (n == 0 || n >= pool->size()) return *pool;
    return std::vector<nr::Context>(pool->begin(), pool->begin() + static_cast<std::ptrdiff_t>(n));
  }
  const auto inst = env.instance();
  nr::Rng rng = nr::detail::split_rng(seed, stream);
  std::vector<nr::Context> out(n);
  for (auto& c : out) c = inst.draw_context(rng);
  return out;
}

int cmd_plan(const EnvOptions& env, std::size_t M, std::size_t N, std::optional<double> alpha, double lambda,
             std::uint64_t seed, const std::string& out, const std::string& trace_path) {
  nr::ExperimentConfig cfg{M, N ? N : M, alpha, lambda, 0.05, 0.1, seed};
  const auto contexts = draw_or_load(env, M, seed, 2);
  cfg.M = contexts.size();
  if (!alpha && cfg.N > cfg.M) cfg.N = cfg.M;
  auto pc = nr::PlannerConfig::from(cfg);
  pc.record_current_uncertainty = !trace_path.empty();
  const auto planned = nr::plan(contexts, pc);
  nr::save_policy(out, planned.policy);
  if (!trace_path.empty()) {
    std::ofstream t(trace_path);
    t << "step,action,snapshot_uncertainty,current_uncertainty,phase\n";
    for (std::size_t m = 0; m < planned.trace.actions.size(); ++m) {
      t << m + 1 << ',' << planned.trace.actions[m] << ','
        << nr::detail::format_double(planned.trace.snapshot_uncertainty[m]) << ','
        << nr::detail::format_double(planned.trace.current_uncertainty[m]) << ','
        << planned.policy.phase_of(m + 1) << '\n';
    }
  }
  const auto sw = nr::switch_bound_check(planned.policy);
  std::cout << "planned M=" << cfg.M << " alpha=" << pc.alpha << " lambda=" << lambda << " phases=" << sw.observed
            << " (bound " << sw.bound << ") -> " << out << '\n';
  return 0;
}

int cmd_sample(const EnvOptions& env, const std::string& policy_path, const std::string& algorithm, std::size_t index,
               std::size_t N, std::uint64_t seed, const std::string& out) {
  const auto inst = env.instance();
  const auto contexts = draw_or_load(env, N, seed, 3);
  nr::Rng policy_rng = nr::detail::split_rng(seed, 4);
  nr::Rng noise_rng = nr::detail::split_rng(seed, 5);
  nr::InteractionDataset data;
  switch (nr::parse_algorithm(algorithm)) {
    case nr::Algorithm::planner_sampler: {
      if (policy_path.empty()) throw nr::ConfigError("planner_sampler needs --policy");
      const auto policy = nr::load_policy(policy_path);
      data = nr::collect(policy, inst, contexts, policy_rng, noise_rng);
      break;
    }
    case nr::Algorithm::random: data = nr::collect(nr::UniformRandomPolicy{}, inst, contexts, policy_rng, noise_rng); break;
    case nr::Algorithm::largest_norm:
      data = nr::collect(nr::LargestNormPolicy{}, inst, contexts, policy_rng, noise_rng);
      break;
    case nr::Algorithm::single_action:
      data = nr::collect(nr::SingleActionPolicy{index}, inst, contexts, policy_rng, noise_rng);
      break;
    case nr::Algorithm::supervised_oracle: data = nr::full_feedback(inst, contexts, noise_rng); break;
  }
  nr::save_dataset(out, data);
  std::cout << "sampled " << data.size() << " records -> " << out << '\n';
  return 0;
}

int cmd_fit(const std::string& data_path, double lambda, const std::string& out) {
  const auto data = nr::load_dataset(data_path);
  const auto est = nr::ridge_fit(data, lambda);
  nr::write_json_file(out, nr::estimate_to_json(est));
  std::cout << "fitted theta-hat on " << est.n_samples << " records -> " << out << '\n';
  return 0;
}

int cmd_eval(const EnvOptions& env, const std::string& estimate_path, std::size_t eval_size, std::uint64_t seed,
             double delta, const std::string& out) {
  const auto est = nr::estimate_from_json(nr::read_json_file(estimate_path));
  const auto inst = env.instance();
  const auto eval = draw_or_load(env, eval_size, seed, 6);
  const auto rep = nr::evaluate(est, inst, eval);
  const auto radius = nr::beta_radius(inst.dim, inst.state_action_count, delta, est.sigma.lambda_reg());
  nr::json j = nr::report_to_json(rep);
  j["beta_sqrt"] = radius.beta_sqrt;
  j["radius_branch"] = radius.branch == nr::RadiusBranch::small_space ? "small_space" : "large_space";
  j["config"] = {{"estimate", estimate_path}, {"eval_set_size", eval.size()}, {"seed", seed}, {"delta", delta},
                 {"env", env.echo()}};
  if (out.empty()) std::cout << j.dump(2) << '\n';
  else nr::write_json_file(out, j);
  std::cout << "policy value " << rep.policy_value << " +- " << rep.policy_value_se << ", uncertainty "
            << rep.expected_max_uncertainty << '\n';
  return 0;
}

int cmd_ingest(const std::string& dir, std::uint64_t seed, const std::string& out) {
  const nr::RankDatasetSpec spec;
  const auto data = nr::ingest_rank_dataset(dir, spec, seed);
  fs::create_directories(out);
  auto dump = [&](const char* name, const nr::RankSplit& split) {
    for (const auto& w : split.warnings) std::cerr << "warning: " << name << ": " << w << '\n';
    if (split.rows_read == 0) return;
    nr::write_json_file(fs::path(out) / (std::string(name) + ".json"), nr::contexts_to_json(split.contexts));
    std::cout << name << ": " << split.contexts.size() << " queries from " << split.rows_read << " rows ("
              << split.rows_truncated << " truncated)\n";
  };
  dump("train", data.train);
  dump("valid", data.valid);
  dump("test", data.test);
  nr::write_json_file(fs::path(out) / "subsample_indices.json", {{"seed", seed}, {"indices", data.indices}});
  return 0;
}

int cmd_histogram(const std::string& data_path, std::size_t actions, const std::string& out) {
  const auto h = nr::emit_action_histogram(nr::load_dataset(data_path), actions);
  if (out.empty()) {
    nr::write_histogram_csv(std::cout, h);
  } else {
    std::ofstream f(out);
    if (!f) throw nr::ConfigError("cannot write " + out);
    nr::write_histogram_csv(f, h);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-reactive exploration: planner, sampler, estimator and experiment harness"};
  app.require_subcommand(1);

  // plan
  auto* plan = app.add_subcommand("plan", "Run the planner over offline contexts and save the mixture policy");
  EnvOptions plan_env;
  plan_env.add(plan);
  std::size_t plan_M = 1000, plan_N = 0;
  std::optional<double> plan_alpha;
  double plan_lambda = 1.0;
  std::uint64_t plan_seed = 0;
  std::string plan_out = "policy.json", plan_trace;
  plan->add_option("--M", plan_M, "Offline contexts (ignored with --contexts)");
  plan->add_option("--N", plan_N, "Planned online samples; alpha defaults to N/M");
  plan->add_option("--alpha", plan_alpha, "Discount on offline updates, in (0, 1]");
  plan->add_option("--lambda", plan_lambda, "Regularization");
  plan->add_option("--seed", plan_seed, "Context stream seed");
  plan->add_option("--out", plan_out, "Policy artifact (.json or binary)");
  plan->add_option("--trace", plan_trace, "Per-step uncertainty trace CSV");

  // sample
  auto* sample = app.add_subcommand("sample", "Replay a policy on fresh contexts and log rewards");
  EnvOptions sample_env;
  sample_env.add(sample);
  std::string sample_policy, sample_alg = "planner_sampler", sample_out = "data.csv";
  std::size_t sample_N = 1000, sample_index = 0;
  std::uint64_t sample_seed = 1;
  sample->add_option("--policy", sample_policy, "Policy artifact from `plan`");
  sample->add_option("--algorithm", sample_alg, "planner_sampler | random | largest_norm | single_action | supervised_oracle");
  sample->add_option("--action-index", sample_index, "Action for single_action");
  sample->add_option("--N", sample_N, "Online contexts");
  sample->add_option("--seed", sample_seed, "Online stream seed");
  sample->add_option("--out", sample_out, "Dataset (.csv or binary)");

  // fit
  auto* fit = app.add_subcommand("fit", "Ridge-fit theta-hat on a dataset");
  std::string fit_data, fit_out = "estimate.json";
  double fit_lambda = 1.0;
  fit->add_option("--data", fit_data, "Dataset from `sample`")->required()->check(CLI::ExistingFile);
  fit->add_option("--lambda", fit_lambda, "Regularization");
  fit->add_option("--out", fit_out, "Estimate JSON");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate the greedy policy of an estimate");
  EnvOptions eval_env;
  eval_env.add(eval);
  std::string eval_est, eval_out;
  std::size_t eval_size = 2000;
  std::uint64_t eval_seed = 2;
  double eval_delta = 0.05;
  eval->add_option("--estimate", eval_est, "Estimate JSON from `fit`")->required()->check(CLI::ExistingFile);
  eval->add_option("--eval-set-size", eval_size, "Held-out contexts");
  eval->add_option("--seed", eval_seed, "Evaluation stream seed");
  eval->add_option("--delta", eval_delta, "Failure probability for the confidence radius");
  eval->add_option("--out", eval_out, "Report JSON (stdout when omitted)");

  // run-experiment
  auto* run = app.add_subcommand("run-experiment", "Multi-trial experiment with periodic refits");
  nr::RunConfig rc;
  std::string run_config_file, run_env = "synthetic", run_algs;
  std::vector<double> run_lambdas;
  std::optional<double> run_alpha;
  std::optional<std::size_t> run_max_train;
  bool run_no_unc = false;
  run->add_option("--config", run_config_file, "JSON config; flags override it")->check(CLI::ExistingFile);
  run->add_option("--env", run_env, "synthetic | hard_uniform | hard_goptimal | rank_dataset | stand_in");
  run->add_option("--algorithms", run_algs, "Comma-separated algorithms");
  run->add_option("--M", rc.experiment.M, "Offline contexts (0: same as N)");
  run->add_option("--N", rc.experiment.N, "Online samples");
  run->add_option("--alpha", run_alpha, "Discount on offline updates");
  run->add_option("--lambda", rc.experiment.lambda_reg, "Regularization");
  run->add_option("--lambda-sweep", run_lambdas, "One experiment per value")->delimiter(',');
  run->add_option("--seed", rc.experiment.seed, "Master seed");
  run->add_option("--trials", rc.n_trials, "Trials");
  run->add_option("--eval-every", rc.eval_every, "Evaluation cadence in samples");
  run->add_option("--eval-set-size", rc.eval_set_size, "Held-out contexts (simulated environments)");
  run->add_option("--sl-samples", rc.sl_samples, "Full-feedback contexts for supervised_oracle");
  run->add_option("--action-index", rc.single_action_index, "Action for single_action");
  run->add_option("--hard-actions", rc.hard_actions, "Action count of hard_uniform");
  run->add_option("--hard-k", rc.hard_k, "k of hard_goptimal");
  run->add_option("--data", rc.data_path, "Ranking directory");
  run->add_option("--max-train-contexts", run_max_train, "Cap on online contexts for ranking data");
  run->add_option("--threads", rc.threads, "Worker threads");
  run->add_flag("--no-uncertainty", run_no_unc, "Skip the uncertainty metric");
  run->add_option("--out", rc.output_path, "Output directory")->required();

  // verify-lemmas
  auto* verify = app.add_subcommand("verify-lemmas", "Monte-Carlo and exact checks of the supporting lemmas");
  nr::LemmaSuiteConfig lc;
  bool verify_quick = false, verify_no_sandwich = false;
  std::string verify_out;
  verify->add_option("--seed", lc.seed, "Seed");
  verify->add_flag("--quick", verify_quick, "Fewer trials");
  verify->add_flag("--no-sandwich", verify_no_sandwich, "Skip the covariance sandwich");
  verify->add_option("--out", verify_out, "Report JSON (stdout when omitted)");

  // gen-standin
  auto* gen = app.add_subcommand("gen-standin", "Write a synthetic ranking dataset in the sparse format");
  nr::StandInSpec ss;
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Target directory")->required();
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--train-queries", ss.train_queries, "Training queries");
  gen->add_option("--valid-queries", ss.valid_queries, "Validation queries");
  gen->add_option("--test-queries", ss.test_queries, "Test queries");

  // ingest-ltr
  auto* ingest = app.add_subcommand("ingest-ltr", "Parse a ranking directory into context bundles");
  std::string ingest_dir, ingest_out = "contexts";
  std::uint64_t ingest_seed = 0;
  ingest->add_option("--data", ingest_dir, "Directory with train.txt, test.txt and optionally valid.txt")->required();
  ingest->add_option("--seed", ingest_seed, "Subsample seed");
  ingest->add_option("--out", ingest_out, "Output directory");

  // histogram
  auto* hist = app.add_subcommand("histogram", "Per-action frequencies of a dataset");
  std::string hist_data, hist_out;
  std::size_t hist_actions = 0;
  hist->add_option("--data", hist_data, "Dataset")->required()->check(CLI::ExistingFile);
  hist->add_option("--actions", hist_actions, "Minimum bin count");
  hist->add_option("--out", hist_out, "CSV (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan) return cmd_plan(plan_env, plan_M, plan_N, plan_alpha, plan_lambda, plan_seed, plan_out, plan_trace);
    if (*sample) return cmd_sample(sample_env, sample_policy, sample_alg, sample_index, sample_N, sample_seed, sample_out);
    if (*fit) return cmd_fit(fit_data, fit_lambda, fit_out);
    if (*eval) return cmd_eval(eval_env, eval_est, eval_size, eval_seed, eval_delta, eval_out);
    if (*run) {
      nr::RunConfig cfg = run_config_file.empty() ? nr::RunConfig{} : nr::run_config_from_json(nr::read_json_file(run_config_file));
      // Flags given on the command line override the file.
      auto given = [&](const char* flag) { return run->count(flag) > 0; };
      if (given("--env") || run_config_file.empty()) cfg.environment = nr::parse_environment(run_env);
      if (given("--algorithms")) {
        cfg.algorithms.clear();
        std::string item;
        std::istringstream list(run_algs);
        while (std::getline(list, item, ',')) cfg.algorithms.push_back(nr::parse_algorithm(item));
      }
      if (given("--M")) cfg.experiment.M = rc.experiment.M;
      if (given("--N")) cfg.experiment.N = rc.experiment.N;
      if (given("--alpha")) cfg.experiment.alpha = run_alpha;
      if (given("--lambda")) cfg.experiment.lambda_reg = rc.experiment.lambda_reg;
      if (given("--lambda-sweep")) cfg.lambda_sweep = run_lambdas;
      if (given("--seed")) cfg.experiment.seed = rc.experiment.seed;
      if (given("--trials")) cfg.n_trials = rc.n_trials;
      if (given("--eval-every")) cfg.eval_every = rc.eval_every;
      if (given("--eval-set-size")) cfg.eval_set_size = rc.eval_set_size;
      if (given("--sl-samples")) cfg.sl_samples = rc.sl_samples;
      if (given("--action-index")) cfg.single_action_index = rc.single_action_index;
      if (given("--hard-actions")) cfg.hard_actions = rc.hard_actions;
      if (given("--hard-k")) cfg.hard_k = rc.hard_k;
      if (given("--data")) cfg.data_path = rc.data_path;
      if (given("--max-train-contexts")) cfg.max_train_contexts = run_max_train;
      if (given("--threads")) cfg.threads = rc.threads;
      if (run_no_unc) cfg.evaluate_uncertainty = false;
      cfg.output_path = rc.output_path;
      const auto results = nr::run_and_write(cfg);
      for (const auto& res : results) {
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
        const auto summary = nr::summarize(res.rows);
        std::cout << "lambda=" << res.config.experiment.lambda_reg << '\n';
        for (auto a : res.config.algorithms) {
          if (auto p = nr::final_point(summary, a)) {
            std::cout << "  " << nr::to_string(a) << " n=" << p->n_samples_seen << " value=" << p->policy_value_mean
                      << " +- " << p->policy_value_se << '\n';
          }
        }
      }
      std::cout << "results -> " << cfg.output_path << '\n';
      return 0;
    }
    if (*verify) {
      if (verify_quick) {
        lc.scalar_trials = 2000;
        lc.planner_runs = 20;
        lc.switch_runs = 40;
        lc.sandwich_trials = 40;
        lc.sandwich_mc_contexts = 20000;
      }
      lc.sandwich = !verify_no_sandwich;
      const auto report = nr::verify_lemmas(lc);
      if (verify_out.empty()) std::cout << report.dump(2) << '\n';
      else nr::write_json_file(verify_out, report);
      std::cerr << "lemma suite: " << (report["pass"].get<bool>() ? "PASS" : "FAIL") << '\n';
      return report["pass"].get<bool>() ? 0 : 1;
    }
    if (*gen) {
      nr::generate_standin(gen_out, ss, gen_seed);
      std::cout << "stand-in dataset -> " << gen_out << '\n';
      return 0;
    }
    if (*ingest) return cmd_ingest(ingest_dir, ingest_seed, ingest_out);
    if (*hist) return cmd_histogram(hist_data, hist_actions, hist_out);
  } catch (const nr::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const nr::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
