#pragma once

// Multi-trial experiment driver, metric emission and the lemma verification suite.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nonreactive/baselines.hpp"
#include "nonreactive/concentration.hpp"
#include "nonreactive/core.hpp"
#include "nonreactive/environments.hpp"
#include "nonreactive/estimator.hpp"
#include "nonreactive/planner.hpp"
#include "nonreactive/sampler.hpp"
#include "nonreactive/serialization.hpp"

namespace nonreactive {

enum class EnvironmentKind { synthetic, hard_uniform, hard_goptimal, rank_dataset, stand_in };
enum class Algorithm { planner_sampler, random, largest_norm, single_action, supervised_oracle };

NLOHMANN_JSON_SERIALIZE_ENUM(EnvironmentKind, {{EnvironmentKind::synthetic, "synthetic"},
                                               {EnvironmentKind::hard_uniform, "hard_uniform"},
                                               {EnvironmentKind::hard_goptimal, "hard_goptimal"},
                                               {EnvironmentKind::rank_dataset, "rank_dataset"},
                                               {EnvironmentKind::stand_in, "stand_in"}})

NLOHMANN_JSON_SERIALIZE_ENUM(Algorithm, {{Algorithm::planner_sampler, "planner_sampler"},
                                         {Algorithm::random, "random"},
                                         {Algorithm::largest_norm, "largest_norm"},
                                         {Algorithm::single_action, "single_action"},
                                         {Algorithm::supervised_oracle, "supervised_oracle"}})

inline std::string to_string(EnvironmentKind e) { return json(e).get<std::string>(); }
inline std::string to_string(Algorithm a) { return json(a).get<std::string>(); }

inline EnvironmentKind parse_environment(const std::string& s) {
  for (auto e : {EnvironmentKind::synthetic, EnvironmentKind::hard_uniform, EnvironmentKind::hard_goptimal,
                 EnvironmentKind::rank_dataset, EnvironmentKind::stand_in}) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown environment '" + s + "'");
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::planner_sampler, Algorithm::random, Algorithm::largest_norm, Algorithm::single_action,
                 Algorithm::supervised_oracle}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algorithm '" + s + "'");
}

struct RunConfig {
  EnvironmentKind environment = EnvironmentKind::synthetic;
  std::vector<Algorithm> algorithms{Algorithm::planner_sampler};
  /// M = 0 means "same size as the online set".
  ExperimentConfig experiment{0, 10000, 1.0, 1.0, 0.05, 0.1, 0};
  std::size_t n_trials = 1;
  std::size_t eval_every = 20;
  std::size_t eval_set_size = 2000;
  std::string output_path;
  std::string data_path;  ///< ranking directory (rank_dataset) or stand-in target (stand_in)
  /// Cap on online contexts for the ranking data, whose horizon depends on the dataset.
  std::optional<std::size_t> max_train_contexts;
  std::size_t sl_samples = 10000;  ///< full-feedback contexts for the supervised oracle
  std::size_t single_action_index = 0;
  std::size_t hard_actions = 10;
  std::size_t hard_k = 3;
  std::vector<double> lambda_sweep;  ///< empty: single run at experiment.lambda_reg
  std::size_t threads = 1;
  bool evaluate_uncertainty = true;

  bool ranking() const {
    return environment == EnvironmentKind::rank_dataset || environment == EnvironmentKind::stand_in;
  }

  void validate() const {
    if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (algorithms.empty()) throw ConfigError("no algorithm selected");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (!ranking()) {
      if (experiment.N < 1) throw ConfigError("N must be >= 1");
      if (eval_set_size < 1) throw ConfigError("eval_set_size must be >= 1");
      ExperimentConfig e = experiment;
      if (e.M == 0) e.M = e.N;
      e.validate();
    } else {
      if (data_path.empty()) throw ConfigError("ranking environments need a data path");
      if (experiment.alpha && !(*experiment.alpha > 0.0 && *experiment.alpha <= 1.0)) {
        throw ConfigError("alpha must lie in (0, 1]");
      }
      if (!(experiment.lambda_reg > 0.0)) throw ConfigError("lambda_reg must be positive");
    }
    for (double l : lambda_sweep) {
      if (!(l > 0.0)) throw ConfigError("lambda sweep values must be positive");
    }
    if (std::find(algorithms.begin(), algorithms.end(), Algorithm::supervised_oracle) != algorithms.end() &&
        sl_samples < 1) {
      throw ConfigError("sl_samples must be >= 1");
    }
  }
};

inline json to_json(const RunConfig& c) {
  json algs = json::array();
  for (auto a : c.algorithms) algs.push_back(a);
  json j{{"environment", c.environment},
         {"algorithms", algs},
         {"M", c.experiment.M},
         {"N", c.experiment.N},
         {"lambda_reg", c.experiment.lambda_reg},
         {"delta", c.experiment.delta},
         {"epsilon", c.experiment.epsilon},
         {"seed", c.experiment.seed},
         {"n_trials", c.n_trials},
         {"eval_every", c.eval_every},
         {"eval_set_size", c.eval_set_size},
         {"output_path", c.output_path},
         {"data_path", c.data_path},
         {"sl_samples", c.sl_samples},
         {"single_action_index", c.single_action_index},
         {"hard_actions", c.hard_actions},
         {"hard_k", c.hard_k},
         {"lambda_sweep", c.lambda_sweep},
         {"threads", c.threads},
         {"evaluate_uncertainty", c.evaluate_uncertainty}};
  j["alpha"] = c.experiment.alpha ? json(*c.experiment.alpha) : json(nullptr);
  j["max_train_contexts"] = c.max_train_contexts ? json(*c.max_train_contexts) : json(nullptr);
  return j;
}

/// Reads a config file; absent keys keep their defaults.
inline RunConfig run_config_from_json(const json& j, RunConfig c = {}) {
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  if (j.contains("environment")) c.environment = parse_environment(j.at("environment").get<std::string>());
  if (j.contains("algorithms")) {
    c.algorithms.clear();
    for (const auto& a : j.at("algorithms")) c.algorithms.push_back(parse_algorithm(a.get<std::string>()));
  }
  if (j.contains("algorithm")) c.algorithms = {parse_algorithm(j.at("algorithm").get<std::string>())};
  opt("M", c.experiment.M);
  opt("N", c.experiment.N);
  opt("lambda_reg", c.experiment.lambda_reg);
  opt("delta", c.experiment.delta);
  opt("epsilon", c.experiment.epsilon);
  opt("seed", c.experiment.seed);
  if (j.contains("alpha")) {
    c.experiment.alpha = j.at("alpha").is_null() ? std::nullopt : std::optional<double>(j.at("alpha").get<double>());
  }
  opt("n_trials", c.n_trials);
  opt("eval_every", c.eval_every);
  opt("eval_set_size", c.eval_set_size);
  opt("output_path", c.output_path);
  opt("data_path", c.data_path);
  if (j.contains("max_train_contexts") && !j.at("max_train_contexts").is_null()) {
    c.max_train_contexts = j.at("max_train_contexts").get<std::size_t>();
  }
  opt("sl_samples", c.sl_samples);
  opt("single_action_index", c.single_action_index);
  opt("hard_actions", c.hard_actions);
  opt("hard_k", c.hard_k);
  opt("lambda_sweep", c.lambda_sweep);
  opt("threads", c.threads);
  opt("evaluate_uncertainty", c.evaluate_uncertainty);
  return c;
}

struct MetricRow {
  Algorithm algorithm = Algorithm::planner_sampler;
  std::size_t trial = 0;
  std::size_t n_samples_seen = 0;
  double policy_value = 0.0;
  std::optional<double> expected_suboptimality;  ///< simulated environments only
  std::optional<double> expected_max_uncertainty;
  double wall_time_ms = 0.0;
};

struct ExperimentResult {
  RunConfig config;
  std::vector<MetricRow> rows;  ///< ordered by (algorithm, trial, n_samples_seen)
  std::vector<std::string> warnings;
  std::vector<std::size_t> subsample_indices;  ///< ranking environments only
};

// ---------------------------------------------------------------------------
// Trial construction

namespace detail {

/// Named sub-streams of one trial's master seed.
enum Stream : std::uint64_t { env_stream = 1, offline_stream, online_stream, policy_stream, noise_stream, eval_stream, sl_stream };

inline std::uint64_t trial_master(std::uint64_t seed, std::size_t trial) {
  Rng r = split_rng(seed, 0x7472000000000000ull + trial);
  return r();
}

inline std::vector<Context> draw_contexts(const BanditInstance& inst, std::size_t n, Rng& rng) {
  std::vector<Context> out(n);
  for (auto& c : out) c = inst.draw_context(rng);
  return out;
}

struct RankingData {
  RankDataset data;
  std::shared_ptr<const std::vector<Context>> train;
};

struct TrialSetup {
  BanditInstance instance;
  std::vector<Context> offline;
  std::vector<Context> online;
  const std::vector<Context>* shared_eval = nullptr;
  std::vector<Context> eval_storage;
  std::vector<Context> sl_contexts;
  double alpha = 1.0;
  bool simulated = true;

  std::span<const Context> eval() const { return shared_eval ? *shared_eval : eval_storage; }
};

inline TrialSetup setup_trial(const RunConfig& cfg, std::uint64_t master, const RankingData* ranking) {
  TrialSetup t;
  Rng offline_rng = split_rng(master, offline_stream);
  Rng online_rng = split_rng(master, online_stream);
  Rng eval_rng = split_rng(master, eval_stream);
  Rng sl_rng = split_rng(master, sl_stream);
  const bool wants_sl = std::find(cfg.algorithms.begin(), cfg.algorithms.end(), Algorithm::supervised_oracle) !=
                        cfg.algorithms.end();

  if (ranking) {
    t.simulated = false;
    t.instance = make_pool_instance("rank", ranking->train, 0.0);
    std::vector<Context> online = *ranking->train;
    std::shuffle(online.begin(), online.end(), online_rng);
    std::size_t n = cfg.experiment.N ? std::min(cfg.experiment.N, online.size()) : online.size();
    if (cfg.max_train_contexts) n = std::min(n, *cfg.max_train_contexts);
    online.resize(n);
    t.online = std::move(online);

    // Planner set: the validation split, or a reshuffled copy of train whose rewards are never read.
    std::vector<Context> planner_set = ranking->data.valid.contexts.empty() ? *ranking->train
                                                                          : ranking->data.valid.contexts;
    std::shuffle(planner_set.begin(), planner_set.end(), offline_rng);
    if (cfg.experiment.M) planner_set.resize(std::min(cfg.experiment.M, planner_set.size()));
    t.offline = std::move(planner_set);
    t.alpha = cfg.experiment.alpha.value_or(1.0);
    t.shared_eval = &ranking->data.test.contexts;
    if (wants_sl) {
      t.sl_contexts = *ranking->train;
      t.sl_contexts.resize(std::min(cfg.sl_samples, t.sl_contexts.size()));
    }
    return t;
  }

  Rng env_rng = split_rng(master, env_stream);
  switch (cfg.environment) {
    case EnvironmentKind::synthetic: t.instance = make_synthetic(env_rng()); break;
    case EnvironmentKind::hard_uniform: t.instance = make_hard_uniform(cfg.hard_actions); break;
    case EnvironmentKind::hard_goptimal: t.instance = make_hard_goptimal(cfg.hard_k); break;
    default: throw ConfigError("not a simulated environment");
  }
  const std::size_t N = cfg.experiment.N;
  const std::size_t M = cfg.experiment.M ? cfg.experiment.M : N;
  ExperimentConfig e = cfg.experiment;
  e.M = M;
  t.alpha = e.resolved_alpha();
  t.offline = draw_contexts(t.instance, M, offline_rng);
  t.online = draw_contexts(t.instance, N, online_rng);
  t.eval_storage = draw_contexts(t.instance, cfg.eval_set_size, eval_rng);
  if (wants_sl) t.sl_contexts = draw_contexts(t.instance, cfg.sl_samples, sl_rng);
  return t;
}

inline MetricRow metric_row(Algorithm alg, std::size_t trial, std::size_t n, const EvaluationReport& rep,
                            bool simulated, bool with_uncertainty, double ms) {
  MetricRow row;
  row.algorithm = alg;
  row.trial = trial;
  row.n_samples_seen = n;
  row.policy_value = rep.policy_value;
  if (simulated) row.expected_suboptimality = rep.expected_suboptimality;
  if (with_uncertainty) row.expected_max_uncertainty = rep.expected_max_uncertainty;
  row.wall_time_ms = ms;
  return row;
}

inline bool eval_point(std::size_t n, std::size_t total, std::size_t every) { return n % every == 0 || n == total; }

template <ExplorationPolicy Policy>
void online_phase(const Policy& policy, Algorithm alg, std::size_t trial, const TrialSetup& t, const RunConfig& cfg,
                  double lambda_reg, std::uint64_t master, std::vector<MetricRow>& out) {
  const auto start = std::chrono::steady_clock::now();
  Rng policy_rng = split_rng(master, policy_stream);
  Rng noise_rng = split_rng(master, noise_stream);
  RidgeAccumulator acc(t.instance.dim, lambda_reg);
  const std::size_t N = t.online.size();
  for (std::size_t n = 1; n <= N; ++n) {
    acc.add(observe(policy, t.instance, t.online[n - 1], policy_rng, noise_rng));
    if (!eval_point(n, N, cfg.eval_every)) continue;
    const auto rep = evaluate(acc.fit(), t.instance, t.eval(), {cfg.evaluate_uncertainty});
    const std::chrono::duration<double, std::milli> ms = std::chrono::steady_clock::now() - start;
    out.push_back(metric_row(alg, trial, n, rep, t.simulated, cfg.evaluate_uncertainty, ms.count()));
  }
}

inline void supervised_phase(std::size_t trial, const TrialSetup& t, const RunConfig& cfg, double lambda_reg,
                             std::uint64_t master, std::vector<MetricRow>& out) {
  const auto start = std::chrono::steady_clock::now();
  Rng noise_rng = split_rng(master, noise_stream);
  RidgeAccumulator acc(t.instance.dim, lambda_reg);
  const std::size_t n_ctx = t.sl_contexts.size();
  for (std::size_t n = 1; n <= n_ctx; ++n) {
    const Context& ctx = t.sl_contexts[n - 1];
    for (std::size_t a = 0; a < ctx.num_actions(); ++a) {
      acc.add(ctx.action(a).transpose(), reward_for(t.instance, ctx, a, noise_rng));
    }
    if (!eval_point(n, n_ctx, cfg.eval_every)) continue;
    const auto rep = evaluate(acc.fit(), t.instance, t.eval(), {cfg.evaluate_uncertainty});
    const std::chrono::duration<double, std::milli> ms = std::chrono::steady_clock::now() - start;
    out.push_back(metric_row(Algorithm::supervised_oracle, trial, n, rep, t.simulated, cfg.evaluate_uncertainty,
                             ms.count()));
  }
}

/// All algorithms on one trial; every algorithm sees the same online contexts and evaluation set.
inline std::vector<MetricRow> run_trial(const RunConfig& cfg, double lambda_reg, std::size_t trial,
                                        const RankingData* ranking) {
  const std::uint64_t master = trial_master(cfg.experiment.seed, trial);
  const TrialSetup t = setup_trial(cfg, master, ranking);
  std::vector<MetricRow> rows;
  for (Algorithm alg : cfg.algorithms) {
    switch (alg) {
      case Algorithm::planner_sampler: {
        // The planner only ever sees the offline set; its policy is frozen before sampling starts.
        const MixturePolicy policy = plan(t.offline, PlannerConfig{lambda_reg, t.alpha, false}).policy;
        online_phase(policy, alg, trial, t, cfg, lambda_reg, master, rows);
        break;
      }
      case Algorithm::random: online_phase(UniformRandomPolicy{}, alg, trial, t, cfg, lambda_reg, master, rows); break;
      case Algorithm::largest_norm: online_phase(LargestNormPolicy{}, alg, trial, t, cfg, lambda_reg, master, rows); break;
      case Algorithm::single_action:
        online_phase(SingleActionPolicy{cfg.single_action_index}, alg, trial, t, cfg, lambda_reg, master, rows);
        break;
      case Algorithm::supervised_oracle: supervised_phase(trial, t, cfg, lambda_reg, master, rows); break;
    }
  }
  return rows;
}

/// Runs fn(i) for i in [0, n) on `threads` workers; results keep index order.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t threads, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

inline RankingData load_ranking(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const RankDatasetSpec spec;
  fs::path dir = cfg.data_path;
  if (cfg.environment == EnvironmentKind::stand_in && !fs::exists(dir / "train.txt")) {
    generate_standin(dir, StandInSpec{}, cfg.experiment.seed);
  }
  RankingData r;
  r.data = ingest_rank_dataset(dir, spec, cfg.experiment.seed);
  if (r.data.train.contexts.empty()) throw DataError("ranking training split has no usable queries");
  if (r.data.test.contexts.empty()) throw DataError("ranking test split has no usable queries");
  r.train = std::make_shared<const std::vector<Context>>(r.data.train.contexts);
  return r;
}

}  // namespace detail

/// Runs every trial of every algorithm at regularization `lambda_reg`.
inline ExperimentResult run_experiment_at(const RunConfig& cfg, double lambda_reg,
                                          const detail::RankingData* ranking = nullptr) {
  cfg.validate();
  std::optional<detail::RankingData> loaded;
  if (cfg.ranking() && !ranking) ranking = &loaded.emplace(detail::load_ranking(cfg));
  ExperimentResult res;
  res.config = cfg;
  res.config.experiment.lambda_reg = lambda_reg;
  res.config.lambda_sweep.clear();
  if (ranking) {
    for (const auto* split : {&ranking->data.train, &ranking->data.valid, &ranking->data.test}) {
      res.warnings.insert(res.warnings.end(), split->warnings.begin(), split->warnings.end());
    }
    res.subsample_indices = ranking->data.indices;
  }
  auto per_trial = detail::parallel_map(cfg.n_trials, cfg.threads, [&](std::size_t trial) {
    return detail::run_trial(cfg, lambda_reg, trial, ranking);
  });
  for (Algorithm alg : cfg.algorithms) {
    for (const auto& rows : per_trial) {
      for (const auto& r : rows) {
        if (r.algorithm == alg) res.rows.push_back(r);
      }
    }
  }
  return res;
}

inline ExperimentResult run_experiment(const RunConfig& cfg) {
  return run_experiment_at(cfg, cfg.experiment.lambda_reg);
}

// ---------------------------------------------------------------------------
// Summaries and output

struct SummaryPoint {
  Algorithm algorithm;
  std::size_t n_samples_seen;
  std::size_t trials;
  double policy_value_mean, policy_value_se;
  std::optional<double> suboptimality_mean, suboptimality_se;
  std::optional<double> uncertainty_mean, uncertainty_se;
};

/// Mean and standard error across trials at each (algorithm, n_samples_seen).
inline std::vector<SummaryPoint> summarize(const std::vector<MetricRow>& rows) {
  struct Acc {
    detail::RunningMoments value, gap, unc;
  };
  std::map<std::pair<int, std::size_t>, Acc> groups;
  for (const auto& r : rows) {
    Acc& a = groups[{static_cast<int>(r.algorithm), r.n_samples_seen}];
    a.value.add(r.policy_value);
    if (r.expected_suboptimality) a.gap.add(*r.expected_suboptimality);
    if (r.expected_max_uncertainty) a.unc.add(*r.expected_max_uncertainty);
  }
  std::vector<SummaryPoint> out;
  for (const auto& [key, a] : groups) {
    SummaryPoint p{static_cast<Algorithm>(key.first), key.second, a.value.n, a.value.mean(), a.value.standard_error(),
                   std::nullopt, std::nullopt, std::nullopt, std::nullopt};
    if (a.gap.n) {
      p.suboptimality_mean = a.gap.mean();
      p.suboptimality_se = a.gap.standard_error();
    }
    if (a.unc.n) {
      p.uncertainty_mean = a.unc.mean();
      p.uncertainty_se = a.unc.standard_error();
    }
    out.push_back(p);
  }
  return out;
}

/// Final evaluation point of `alg`, if any rows exist.
inline std::optional<SummaryPoint> final_point(const std::vector<SummaryPoint>& summary, Algorithm alg) {
  std::optional<SummaryPoint> best;
  for (const auto& p : summary) {
    if (p.algorithm == alg && (!best || p.n_samples_seen > best->n_samples_seen)) best = p;
  }
  return best;
}

namespace detail {

inline std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace detail

/// Deterministic metrics CSV; wall times go to the separate timing CSV so reruns compare byte for byte.
inline void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "algorithm,trial,n_samples_seen,policy_value,expected_suboptimality,expected_max_uncertainty\n";
  for (const auto& r : rows) {
    out << to_string(r.algorithm) << ',' << r.trial << ',' << r.n_samples_seen << ','
        << detail::format_double(r.policy_value) << ',' << detail::cell(r.expected_suboptimality) << ','
        << detail::cell(r.expected_max_uncertainty) << '\n';
  }
}

inline void write_timing_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "algorithm,trial,n_samples_seen,wall_time_ms\n";
  for (const auto& r : rows) {
    out << to_string(r.algorithm) << ',' << r.trial << ',' << r.n_samples_seen << ','
        << detail::format_double(r.wall_time_ms) << '\n';
  }
}

inline json summary_json(const ExperimentResult& res) {
  const auto summary = summarize(res.rows);
  json points = json::array();
  for (const auto& p : summary) {
    json j{{"algorithm", p.algorithm},
           {"n_samples_seen", p.n_samples_seen},
           {"trials", p.trials},
           {"policy_value_mean", p.policy_value_mean},
           {"policy_value_se", p.policy_value_se}};
    if (p.suboptimality_mean) {
      j["expected_suboptimality_mean"] = *p.suboptimality_mean;
      j["expected_suboptimality_se"] = *p.suboptimality_se;
    }
    if (p.uncertainty_mean) {
      j["expected_max_uncertainty_mean"] = *p.uncertainty_mean;
      j["expected_max_uncertainty_se"] = *p.uncertainty_se;
    }
    points.push_back(std::move(j));
  }
  json finals = json::object();
  for (Algorithm a : res.config.algorithms) {
    if (auto p = final_point(summary, a)) {
      finals[to_string(a)] = {{"n_samples_seen", p->n_samples_seen},
                              {"policy_value_mean", p->policy_value_mean},
                              {"policy_value_se", p->policy_value_se}};
    }
  }
  return json{{"lambda_reg", res.config.experiment.lambda_reg}, {"points", points}, {"final", finals},
              {"warnings", res.warnings}};
}

/// Writes metrics.csv, timing.csv, summary.json and config.json into `dir`.
inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& res) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "metrics.csv");
    if (!out) throw ConfigError("cannot write " + (dir / "metrics.csv").string());
    write_metrics_csv(out, res.rows);
  }
  {
    std::ofstream out(dir / "timing.csv");
    write_timing_csv(out, res.rows);
  }
  write_json_file(dir / "summary.json", summary_json(res));
  json cfg = to_json(res.config);
  if (!res.subsample_indices.empty()) cfg["subsample_indices"] = res.subsample_indices;
  write_json_file(dir / "config.json", cfg);
}

inline std::string lambda_label(double lambda) {
  std::ostringstream s;
  s << "lambda_" << lambda;
  return s.str();
}

/// Runs the configured experiment, or one experiment per sweep value, writing
/// results under config.output_path. Returns one result per lambda.
inline std::vector<ExperimentResult> run_and_write(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.output_path.empty()) throw ConfigError("output_path is required");
  std::optional<detail::RankingData> ranking;
  if (cfg.ranking()) ranking.emplace(detail::load_ranking(cfg));
  const detail::RankingData* r = ranking ? &*ranking : nullptr;
  std::vector<ExperimentResult> out;
  if (cfg.lambda_sweep.empty()) {
    out.push_back(run_experiment_at(cfg, cfg.experiment.lambda_reg, r));
    write_experiment(cfg.output_path, out.back());
  } else {
    for (double lambda : cfg.lambda_sweep) {
      out.push_back(run_experiment_at(cfg, lambda, r));
      write_experiment(std::filesystem::path(cfg.output_path) / lambda_label(lambda), out.back());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Action histogram

struct ActionHistogram {
  std::vector<std::size_t> counts;
  std::vector<double> frequencies;
};

/// Per-action frequencies; bins cover 0..max(action index, n_actions - 1).
inline ActionHistogram emit_action_histogram(const InteractionDataset& data, std::size_t n_actions = 0) {
  if (data.empty()) throw ConfigError("histogram needs a nonempty dataset");
  std::size_t bins = n_actions;
  for (const auto& r : data.records()) bins = std::max(bins, r.action_index + 1);
  ActionHistogram h;
  h.counts.assign(bins, 0);
  for (const auto& r : data.records()) ++h.counts[r.action_index];
  h.frequencies.resize(bins);
  const double total = static_cast<double>(data.size());
  for (std::size_t a = 0; a < bins; ++a) h.frequencies[a] = static_cast<double>(h.counts[a]) / total;
  return h;
}

inline void write_histogram_csv(std::ostream& out, const ActionHistogram& h) {
  out << "action,count,frequency\n";
  for (std::size_t a = 0; a < h.counts.size(); ++a) {
    out << a << ',' << h.counts[a] << ',' << detail::format_double(h.frequencies[a]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Lemma verification suite

struct LemmaSuiteConfig {
  std::uint64_t seed = 0;
  std::size_t scalar_trials = 10000;
  std::size_t scalar_horizon = 100;
  double delta = 0.05;
  std::size_t planner_runs = 100;
  std::size_t switch_runs = 200;
  std::size_t probe_contexts = 50;
  bool sandwich = true;
  std::size_t sandwich_trials = 200;
  std::size_t sandwich_N = 20;
  std::size_t sandwich_mc_contexts = 100000;
  bool nonconcentration = true;
};

namespace detail {

inline json lemma_entry(const CoverageReport& r, json params) {
  json j = coverage_to_json(r);
  j["parameters"] = std::move(params);
  return j;
}

struct PlannerDraw {
  std::size_t d, A, M;
  double lambda;
};

/// Random planner configuration in the regime M >= lambda the switch bound is stated for.
inline PlannerDraw draw_planner_config(Rng& rng, double min_lambda) {
  std::uniform_int_distribution<std::size_t> dim(1, 10), actions(2, 12), steps(1, 400);
  std::uniform_real_distribution<double> log_lambda(std::log(min_lambda), std::log(20.0));
  PlannerDraw p{dim(rng), actions(rng), steps(rng), std::exp(log_lambda(rng))};
  p.M = std::max<std::size_t>(p.M, static_cast<std::size_t>(std::ceil(p.lambda)));
  return p;
}

}  // namespace detail

/// Runs every Monte-Carlo and exact lemma check; each entry carries trials, violations, parameters and pass.
inline json verify_lemmas(const LemmaSuiteConfig& cfg) {
  json report = json::object();
  const std::vector<ProcessFamily> families = {processes::iid_bernoulli(0.3), processes::constant_zero(),
                                               processes::sticky_bernoulli(), processes::running_mean_bernoulli(),
                                               processes::context_driven_bernoulli()};
  json scalar = json::array();
  bool scalar_pass = true;
  std::uint64_t s = cfg.seed;
  for (const auto& f : families) {
    for (auto b : {ScalarBound::reverse_bernstein, ScalarBound::bernstein}) {
      const auto r = coverage_test(f, b, cfg.scalar_horizon, cfg.scalar_trials, cfg.delta, ++s);
      scalar_pass = scalar_pass && r.pass();
      scalar.push_back(detail::lemma_entry(r, {{"T", cfg.scalar_horizon}, {"delta", cfg.delta}}));
    }
  }
  report["scalar_martingale_bounds"] = {{"entries", scalar}, {"pass", scalar_pass}};

  {
    RankOneDistribution dist;
    dist.directions = Matrix::Identity(3, 3);
    dist.probabilities = Vector::Constant(3, 1.0 / 3.0);
    const auto r = matrix_bound_coverage(dist, 200, 0.05, 500, ++s);
    report["matrix_rank_one_bounds"] = {
        {"upper", detail::lemma_entry(r.upper, {{"n", 200}, {"lambda", 0.05}, {"d", 3}})},
        {"lower", detail::lemma_entry(r.lower, {{"n", 200}, {"lambda", 0.05}, {"d", 3}})},
        {"pass", r.upper.pass() && r.lower.pass()}};
  }

  {
    Rng rng(++s);
    std::size_t violations = 0, switch_violations = 0;
    json worst = nullptr;
    double worst_slack = std::numeric_limits<double>::infinity();
    for (std::size_t run = 0; run < cfg.switch_runs; ++run) {
      const auto p = detail::draw_planner_config(rng, 0.1);
      const auto inst = make_unit_ball_instance(p.d, p.A, rng());
      Rng ctx_rng(rng());
      const auto contexts = detail::draw_contexts(inst, p.M, ctx_rng);
      const auto planned = plan(contexts, PlannerConfig{p.lambda, 1.0, false});
      const auto check = switch_bound_check(planned.policy);
      if (!check.pass) ++violations;
      if (!check.switches_pass) ++switch_violations;
      if (check.bound - static_cast<double>(check.observed) < worst_slack) {
        worst_slack = check.bound - static_cast<double>(check.observed);
        worst = {{"d", p.d}, {"M", p.M}, {"lambda", p.lambda}, {"K", check.observed}, {"bound", check.bound}};
      }
    }
    // Snapshot count is the asserted quantity; refreshes (snapshots - 1) are what the determinant argument bounds.
    report["switch_count"] = {{"trials", cfg.switch_runs},
                              {"violations", violations},
                              {"refresh_violations", switch_violations},
                              {"tightest_run", worst},
                              {"pass", violations == 0}};
  }

  {
    Rng rng(++s);
    std::size_t mono_violations = 0, potential_violations = 0, sum_violations = 0;
    double worst_increase = -std::numeric_limits<double>::infinity();
    double worst_potential_ratio = 0.0;
    for (std::size_t run = 0; run < cfg.planner_runs; ++run) {
      const auto p = detail::draw_planner_config(rng, 1.0);
      std::uniform_real_distribution<double> alpha_draw(0.1, 1.0);
      const double alpha = alpha_draw(rng);
      const auto inst = make_unit_ball_instance(p.d, p.A, rng());
      Rng ctx_rng(rng());
      const auto contexts = detail::draw_contexts(inst, p.M, ctx_rng);
      const auto planned = plan(contexts, PlannerConfig{p.lambda, alpha, false});
      const auto probe = detail::draw_contexts(inst, cfg.probe_contexts, ctx_rng);
      const double inc = worst_uncertainty_increase(planned.policy, probe);
      worst_increase = std::max(worst_increase, inc);
      if (inc > 1e-8) ++mono_violations;
      const auto pot = potential_check(scaled_planner_features(planned), p.lambda);
      if (!pot.pass) ++potential_violations;
      if (pot.rhs > 0.0) worst_potential_ratio = std::max(worst_potential_ratio, pot.lhs / pot.rhs);
      if (!uncertainty_sum_check(planned).pass) ++sum_violations;
    }
    report["decreasing_uncertainty"] = {{"trials", cfg.planner_runs},
                                        {"violations", mono_violations},
                                        {"probe_contexts", cfg.probe_contexts},
                                        {"worst_increase", worst_increase},
                                        {"tolerance", 1e-8},
                                        {"pass", mono_violations == 0}};
    report["elliptical_potential"] = {{"trials", cfg.planner_runs},
                                      {"violations", potential_violations},
                                      {"worst_lhs_over_rhs", worst_potential_ratio},
                                      {"pass", potential_violations == 0}};
    report["uncertainty_sum"] = {{"trials", cfg.planner_runs}, {"violations", sum_violations},
                                 {"pass", sum_violations == 0}};
  }

  if (cfg.sandwich) {
    const std::size_t d = 2;
    SandwichConfig sc;
    sc.N = cfg.sandwich_N;
    sc.delta = cfg.delta;
    sc.lambda_reg = sandwich_lambda(d, cfg.delta);
    sc.M = offline_requirement(d, sc.N, sc.lambda_reg, cfg.delta);
    sc.trials = cfg.sandwich_trials;
    sc.mc_contexts = cfg.sandwich_mc_contexts;
    const auto rep = sandwich_check(make_hard_uniform(10), sc, ++s);
    const json params{{"d", d}, {"M", sc.M}, {"N", sc.N}, {"lambda_reg", sc.lambda_reg}, {"delta", sc.delta}};
    report["covariance_sandwich"] = {{"offline", detail::lemma_entry(rep.offline, params)},
                                     {"online", detail::lemma_entry(rep.online, params)},
                                     {"worst_offline_margin", rep.worst_offline_margin},
                                     {"worst_online_margin", rep.worst_online_margin},
                                     {"pass", rep.offline.pass() && rep.online.pass()}};
  }

  if (cfg.nonconcentration) {
    // Reported, not asserted: lambda far below the threshold on the non-concentrating instance.
    const std::size_t d = 5, M = 200;
    SandwichConfig sc;
    sc.M = M;
    sc.N = M;
    sc.lambda_reg = 0.01;
    sc.delta = cfg.delta;
    sc.trials = 50;
    sc.mc_contexts = 20000;
    const auto rep = sandwich_check(make_nonconcentrating(d, M), sc, ++s);
    report["nonconcentrating_instance"] = {{"offline_violation_rate", rep.offline.rate()},
                                           {"online_violation_rate", rep.online.rate()},
                                           {"trials", sc.trials},
                                           {"parameters", {{"d", d}, {"M", M}, {"lambda_reg", sc.lambda_reg}}},
                                           {"asserted", false}};
  }

  bool all = true;
  for (auto& [name, entry] : report.items()) {
    if (entry.contains("pass")) all = all && entry["pass"].get<bool>();
  }
  report["pass"] = all;
  report["seed"] = cfg.seed;
  return report;
}

}  // namespace nonreactive
