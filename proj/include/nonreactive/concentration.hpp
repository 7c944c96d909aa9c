#pragma once

// Bound calculators and Monte-Carlo coverage harnesses for the scalar and
// matrix concentration results the planner/sampler analysis relies on.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nonreactive/core.hpp"
#include "nonreactive/covariance.hpp"
#include "nonreactive/planner.hpp"
#include "nonreactive/sampler.hpp"

namespace nonreactive {

struct CoverageReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double target_delta = 0.0;
  std::string bound_description;
  std::uint64_t seed = 0;

  double rate() const { return trials ? static_cast<double>(violations) / static_cast<double>(trials) : 0.0; }
  /// delta + 3 sqrt(delta / trials): three binomial standard deviations of slack.
  double threshold() const {
    return target_delta + 3.0 * std::sqrt(target_delta / static_cast<double>(std::max<std::size_t>(trials, 1)));
  }
  bool pass() const { return rate() <= threshold(); }
};

// ---------------------------------------------------------------------------
// Scalar bounds

/// Upper bound on sum_t E_t X_t given sum_t X_t, for 0 <= X_t <= 1.
inline double reverse_bernstein_bound(double sum_x, double delta) {
  if (!(sum_x >= 0.0)) throw ConfigError("reverse Bernstein needs sum_x >= 0");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1]");
  const double log_inv = -std::log(delta);
  const double c1 = 2.0 * std::sqrt(log_inv);
  const double c2 = 2.0 * log_inv;
  const double root = c1 + std::sqrt(c1 * c1 + 4.0 * (sum_x + c2));
  return 0.25 * root * root;
}

/// Upper bound on sum_t X_t for a martingale difference sequence with X_t <= 1.
inline double bernstein_bound(double sum_cond_var, double delta) {
  if (!(sum_cond_var >= 0.0)) throw ConfigError("Bernstein needs a nonnegative variance sum");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1]");
  const double log_inv = -std::log(delta);
  return 2.0 * std::sqrt(sum_cond_var * log_inv) + 2.0 * log_inv;
}

enum class ChernoffTail { min_tail, max_tail, doubling };

/// Loosened matrix Chernoff tail probabilities:
/// min: d (1 - dev^2/2)^{mu/R}; max: d (1 - dev^2/4)^{mu/R}; doubling: d exp(-mu / (4R)).
inline double matrix_chernoff_tail(double mu, double R, double deviation, std::size_t d, ChernoffTail tail) {
  if (!(mu > 0.0) || !(R > 0.0)) throw ConfigError("matrix Chernoff needs mu > 0 and R > 0");
  const double dd = static_cast<double>(d);
  if (tail == ChernoffTail::doubling) return dd * std::exp(-mu / (4.0 * R));
  if (!(deviation >= 0.0 && deviation <= 1.0)) throw ConfigError("deviation must lie in [0, 1]");
  const double base = tail == ChernoffTail::min_tail ? 1.0 - deviation * deviation / 2.0
                                                     : 1.0 - deviation * deviation / 4.0;
  return dd * std::pow(base, mu / R);
}

// ---------------------------------------------------------------------------
// Scalar coverage

/// One step of an adapted process: X_t together with its F_{t-1}-conditional moments.
struct ProcessStep {
  double x = 0.0;
  double cond_mean = 0.0;
  double cond_var = 0.0;
};

/// A family of [0,1]-valued processes; `step` sees the realized history.
struct ProcessFamily {
  std::string name;
  std::function<ProcessStep(std::span<const double> history, Rng& rng)> step;
};

namespace processes {

inline ProcessStep bernoulli_step(double p, Rng& rng) {
  std::bernoulli_distribution coin(p);
  return ProcessStep{coin(rng) ? 1.0 : 0.0, p, p * (1.0 - p)};
}

inline ProcessFamily iid_bernoulli(double p) {
  return {"iid Bernoulli(" + std::to_string(p) + ")",
          [p](std::span<const double>, Rng& rng) { return bernoulli_step(p, rng); }};
}

inline ProcessFamily constant_zero() {
  return {"constant zero", [](std::span<const double>, Rng&) { return ProcessStep{}; }};
}

/// Success probability jumps to 0.9 after a success and 0.1 after a failure.
inline ProcessFamily sticky_bernoulli() {
  return {"sticky Bernoulli (0.9 after a 1, 0.1 after a 0)", [](std::span<const double> h, Rng& rng) {
            const double p = h.empty() ? 0.5 : (h.back() > 0.5 ? 0.9 : 0.1);
            return bernoulli_step(p, rng);
          }};
}

/// Success probability tracks the running mean of the history, clipped to [0.05, 0.95].
inline ProcessFamily running_mean_bernoulli() {
  return {"running-mean Bernoulli", [](std::span<const double> h, Rng& rng) {
            double s = 0.0;
            for (double v : h) s += v;
            const double p = h.empty() ? 0.3 : std::clamp(s / static_cast<double>(h.size()), 0.05, 0.95);
            return bernoulli_step(p, rng);
          }};
}

/// A fresh binary context picks p_low or p_high; both depend on the history length.
inline ProcessFamily context_driven_bernoulli() {
  return {"context-driven Bernoulli chain", [](std::span<const double> h, Rng& rng) {
            const double drift = 0.3 * std::exp(-static_cast<double>(h.size()) / 50.0);
            const double p_low = 0.05 + drift;
            const double p_high = 0.6 + drift;
            std::bernoulli_distribution ctx(0.5);
            const double p = ctx(rng) ? p_high : p_low;
            const double mean = 0.5 * (p_low + p_high);
            std::bernoulli_distribution coin(p);
            return ProcessStep{coin(rng) ? 1.0 : 0.0, mean, mean * (1.0 - mean)};
          }};
}

}  // namespace processes

enum class ScalarBound { reverse_bernstein, bernstein };

/// Simulates `trials` sequences of length T and counts bound violations.
///
/// reverse_bernstein: violated when sum E_t X_t exceeds the bound at sum X_t.
/// bernstein: applied to xi_t = E_t X_t - X_t with variance sum Var_t X_t.
inline CoverageReport coverage_test(const ProcessFamily& family, ScalarBound bound, std::size_t T,
                                    std::size_t trials, double delta, std::uint64_t seed) {
  if (trials == 0 || T == 0) throw ConfigError("coverage test needs trials >= 1 and T >= 1");
  CoverageReport rep;
  rep.trials = trials;
  rep.target_delta = delta;
  rep.seed = seed;
  rep.bound_description = std::string(bound == ScalarBound::reverse_bernstein ? "reverse Bernstein" : "Bernstein") +
                          " on " + family.name + ", T=" + std::to_string(T);
  Rng rng(seed);
  std::vector<double> history;
  history.reserve(T);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    history.clear();
    double sum_x = 0.0, sum_mean = 0.0, sum_var = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const ProcessStep s = family.step(history, rng);
      history.push_back(s.x);
      sum_x += s.x;
      sum_mean += s.cond_mean;
      sum_var += s.cond_var;
    }
    const bool violated = bound == ScalarBound::reverse_bernstein
                              ? sum_mean > reverse_bernstein_bound(sum_x, delta)
                              : (sum_mean - sum_x) > bernstein_bound(sum_var, delta);
    if (violated) ++rep.violations;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Matrix coverage

/// Finite distribution over unit vectors; X = x x^T.
struct RankOneDistribution {
  Matrix directions;  ///< rows are unit vectors
  Vector probabilities;

  Matrix expectation() const {
    Matrix e = Matrix::Zero(directions.cols(), directions.cols());
    for (Eigen::Index i = 0; i < directions.rows(); ++i) {
      e.noalias() += probabilities(i) * directions.row(i).transpose() * directions.row(i);
    }
    return e;
  }
};

struct MatrixBoundReport {
  CoverageReport upper;  ///< (1/n) sum X <= 6 lambda I + 2 E[X]
  CoverageReport lower;  ///< 3 lambda I + (1/n) sum X >= E[X] / 8
  double upper_failure_bound = 0.0;  ///< 2 d exp(-n lambda / 4)
  double lower_failure_bound = 0.0;  ///< 2 d exp(-n lambda / 8)
};

/// Monte-Carlo check of the all-direction matrix upper and lower bounds on i.i.d. rank-one samples.
inline MatrixBoundReport matrix_bound_coverage(const RankOneDistribution& dist, std::size_t n, double lambda,
                                               std::size_t trials, std::uint64_t seed, double tol = 1e-9) {
  const auto d = dist.directions.cols();
  const Matrix expect = dist.expectation();
  const Matrix I = Matrix::Identity(d, d);
  MatrixBoundReport rep;
  rep.upper_failure_bound = 2.0 * static_cast<double>(d) * std::exp(-static_cast<double>(n) * lambda / 4.0);
  rep.lower_failure_bound = 2.0 * static_cast<double>(d) * std::exp(-static_cast<double>(n) * lambda / 8.0);
  rep.upper = CoverageReport{trials, 0, std::min(1.0, rep.upper_failure_bound), "matrix upper bound", seed};
  rep.lower = CoverageReport{trials, 0, std::min(1.0, rep.lower_failure_bound), "matrix lower bound", seed};
  Rng rng(seed);
  std::discrete_distribution<Eigen::Index> pick(dist.probabilities.data(),
                                                dist.probabilities.data() + dist.probabilities.size());
  for (std::size_t t = 0; t < trials; ++t) {
    Matrix avg = Matrix::Zero(d, d);
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = pick(rng);
      avg.noalias() += dist.directions.row(i).transpose() * dist.directions.row(i);
    }
    avg /= static_cast<double>(n);
    if (min_eigenvalue(6.0 * lambda * I + 2.0 * expect - avg) < -tol) ++rep.upper.violations;
    if (min_eigenvalue(3.0 * lambda * I + avg - expect / 8.0) < -tol) ++rep.lower.violations;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Offline / online covariance sandwich

/// Smallest M with M >= (96 K N / lambda) ln(192 d N K / (lambda delta)), K from the switch bound.
inline std::size_t offline_requirement(std::size_t d, std::size_t N, double lambda_reg, double delta) {
  const double n = static_cast<double>(N);
  double M = n;
  for (int it = 0; it < 200; ++it) {
    const double K = std::max(1.0, switch_count_bound(d, static_cast<std::size_t>(std::ceil(M)), lambda_reg));
    const double need = 96.0 * K * n / lambda_reg *
                        std::log(192.0 * static_cast<double>(d) * n * K / (lambda_reg * delta));
    const double next = std::max(n, std::ceil(need));
    if (next <= M) break;
    M = next;
  }
  return static_cast<std::size_t>(std::ceil(M));
}

/// Regularization at which the online lower sandwich holds w.p. 1 - delta/4: 24 ln(8d/delta).
inline double sandwich_lambda(std::size_t d, double delta) {
  return 24.0 * std::log(8.0 * static_cast<double>(d) / delta);
}

struct SandwichConfig {
  std::size_t M = 0;
  std::size_t N = 0;
  double lambda_reg = 1.0;
  double delta = 0.05;
  std::size_t trials = 200;
  std::size_t mc_contexts = 100000;
  double tol = 1e-6;
};

struct SandwichReport {
  CoverageReport offline;  ///< Sigma_M <= 2 Sigma-bar
  CoverageReport online;   ///< 9 Sigma'_N >= Sigma-bar
  double worst_offline_margin = 0.0;  ///< min over trials of lambda_min(2 Sigma-bar - Sigma_M)
  double worst_online_margin = 0.0;   ///< min over trials of lambda_min(9 Sigma'_N - Sigma-bar)
  std::size_t mean_phases = 0;
};

/// lambda I + alpha sum_k len_k E_s[phi_k phi_k^T], the phase expectations
/// estimated on `probe` contexts. Contexts sharing an id are evaluated once.
inline Matrix expected_planner_covariance(const MixturePolicy& policy, std::span<const Context> probe) {
  const auto d = static_cast<Eigen::Index>(policy.dimension());
  std::map<std::uint64_t, std::pair<const Context*, std::size_t>> unique;
  for (const Context& c : probe) {
    auto [it, inserted] = unique.try_emplace(c.id, &c, 0);
    ++it->second.second;
  }
  Matrix sigma_bar = policy.lambda_reg() * Matrix::Identity(d, d);
  const double n = static_cast<double>(probe.size());
  for (std::size_t k = 0; k < policy.num_phases(); ++k) {
    Matrix phase = Matrix::Zero(d, d);
    for (const auto& [id, entry] : unique) {
      const auto& [ctx, count] = entry;
      const auto row = ctx->action(policy.phase_action(k, *ctx));
      phase.noalias() += static_cast<double>(count) * row.transpose() * row;
    }
    sigma_bar += policy.alpha() * static_cast<double>(policy.phase_length(k)) / n * phase;
  }
  return 0.5 * (sigma_bar + sigma_bar.transpose());
}

/// Runs planner and sampler `trials` times and checks both sandwich events each time.
inline SandwichReport sandwich_check(const BanditInstance& instance, const SandwichConfig& cfg, std::uint64_t seed) {
  if (cfg.M == 0 || cfg.N == 0 || cfg.N > cfg.M) throw ConfigError("sandwich check needs 1 <= N <= M");
  instance.validate();
  const double alpha = static_cast<double>(cfg.N) / static_cast<double>(cfg.M);
  const double target = cfg.delta / 4.0;
  SandwichReport rep;
  rep.offline = CoverageReport{cfg.trials, 0, target, "Sigma_M <= 2 Sigma_bar on " + instance.name, seed};
  rep.online = CoverageReport{cfg.trials, 0, target, "9 Sigma'_N >= Sigma_bar on " + instance.name, seed};
  rep.worst_offline_margin = rep.worst_online_margin = std::numeric_limits<double>::infinity();
  std::size_t phases = 0;

  for (std::size_t t = 0; t < cfg.trials; ++t) {
    Rng offline_rng = detail::split_rng(seed + t, 1);
    Rng online_rng = detail::split_rng(seed + t, 2);
    Rng probe_rng = detail::split_rng(seed + t, 3);

    std::vector<Context> offline(cfg.M);
    for (auto& c : offline) c = instance.draw_context(offline_rng);
    const PlanResult planned = plan(offline, PlannerConfig{cfg.lambda_reg, alpha, false});
    phases += planned.policy.num_phases();

    std::vector<Context> probe(cfg.mc_contexts);
    for (auto& c : probe) c = instance.draw_context(probe_rng);
    const Matrix sigma_bar = expected_planner_covariance(planned.policy, probe);

    const InteractionDataset online = sample(planned.policy, instance, cfg.N, online_rng);
    const Matrix sigma_online = dataset_covariance(online, cfg.lambda_reg).matrix();

    const double off_margin = min_eigenvalue(2.0 * sigma_bar - planned.final_covariance);
    const double on_margin = min_eigenvalue(9.0 * sigma_online - sigma_bar);
    rep.worst_offline_margin = std::min(rep.worst_offline_margin, off_margin);
    rep.worst_online_margin = std::min(rep.worst_online_margin, on_margin);
    if (off_margin < -cfg.tol) ++rep.offline.violations;
    if (on_margin < -cfg.tol) ++rep.online.violations;
  }
  rep.mean_phases = cfg.trials ? phases / cfg.trials : 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Elliptical potential and switch count

struct PotentialResult {
  double lhs = 0.0;            ///< sum_m ||x_m||^2 against the lazy snapshot
  double lhs_unsquared = 0.0;  ///< sum_m ||x_m|| against the lazy snapshot
  double rhs = 0.0;            ///< 3 ln(det Sigma_{M+1} / det(lambda I))
  double max_det_ratio = 1.0;  ///< largest det(Sigma_m) / det(Sigma_lazy) seen before a refresh
  bool pass = false;
};

/// Evaluates the doubling-schedule elliptical potential on the rows of `xs`.
inline PotentialResult potential_check(const Matrix& xs, double lambda_reg, double tol = 1e-9) {
  if (!(lambda_reg >= 1.0)) throw ConfigError("potential check needs lambda_reg >= 1");
  if (xs.cols() < 1) throw ConfigError("potential check needs d >= 1");
  if (xs.rows() > 0 && xs.rowwise().norm().maxCoeff() > 1.0 + kNormCapSlack) {
    throw ConfigError("potential check needs ||x|| <= 1");
  }
  RegularizedCovariance cov(static_cast<std::size_t>(xs.cols()), lambda_reg, 1.0);
  std::optional<CovarianceSnapshot> lazy;
  PotentialResult res;
  for (Eigen::Index m = 0; m < xs.rows(); ++m) {
    if (lazy) res.max_det_ratio = std::max(res.max_det_ratio, det_ratio(cov, *lazy));
    if (!lazy || cov.log_det() - lazy->log_det() > std::numbers::ln2) lazy.emplace(cov.snapshot(static_cast<std::size_t>(m) + 1));
    const double u = lazy->mahalanobis(xs.row(m).transpose());
    res.lhs += u * u;
    res.lhs_unsquared += u;
    cov.rank_one_update(xs.row(m).transpose());
  }
  if (res.max_det_ratio > 4.0 + 1e-9) throw ConfigError("doubling schedule exceeded a determinant ratio of 4");
  cov.refresh();
  res.rhs = 3.0 * (cov.log_det() - static_cast<double>(xs.cols()) * std::log(lambda_reg));
  res.pass = res.lhs <= res.rhs + tol;
  return res;
}

/// Planner features scaled by sqrt(alpha), the sequence whose potential the planner's covariance tracks.
inline Matrix scaled_planner_features(const PlanResult& planned) {
  return std::sqrt(planned.policy.alpha()) * planned.trace.chosen_features;
}

struct SwitchCheck {
  std::size_t observed = 0;  ///< distinct snapshots, including the initial one
  std::size_t switches = 0;  ///< snapshot refreshes after the first step
  double bound = 0.0;
  bool pass = false;           ///< observed <= bound
  bool switches_pass = false;  ///< switches <= bound
};

inline SwitchCheck switch_bound_check(const MixturePolicy& policy) {
  SwitchCheck c;
  c.observed = policy.num_phases();
  c.switches = c.observed - 1;
  c.bound = switch_count_bound(policy.dimension(), policy.total_steps(), policy.lambda_reg());
  c.pass = static_cast<double>(c.observed) <= c.bound;
  c.switches_pass = static_cast<double>(c.switches) <= c.bound;
  return c;
}

/// Largest increase of max_a ||phi(s,a)||_{Sigma_k^{-1}} from one snapshot to
/// the next, over the probe contexts. Nonpositive when uncertainty never grows.
inline double worst_uncertainty_increase(const MixturePolicy& policy, std::span<const Context> probe) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const Context& ctx : probe) {
    double prev = policy.snapshot(0).action_uncertainties(ctx.features).maxCoeff();
    for (std::size_t k = 1; k < policy.num_phases(); ++k) {
      const double cur = policy.snapshot(k).action_uncertainties(ctx.features).maxCoeff();
      worst = std::max(worst, cur - prev);
      prev = cur;
    }
  }
  return worst;
}

struct UncertaintySumCheck {
  double lhs = 0.0;  ///< sum_m U_m against the active snapshot
  double rhs = 0.0;  ///< sqrt((M / alpha) * 3 * ln(det Sigma_{M+1} / det(lambda I)))
  bool pass = false;
};

inline UncertaintySumCheck uncertainty_sum_check(const PlanResult& planned, double tol = 1e-9) {
  const auto& policy = planned.policy;
  UncertaintySumCheck c;
  for (double u : planned.trace.snapshot_uncertainty) c.lhs += u;
  const Eigen::LLT<Matrix> llt = detail::factorize(planned.final_covariance);
  const double ln_det = detail::log_det_from_llt(llt) -
                        static_cast<double>(policy.dimension()) * std::log(policy.lambda_reg());
  c.rhs = std::sqrt(static_cast<double>(policy.total_steps()) / policy.alpha() * 3.0 * std::max(0.0, ln_det));
  c.pass = c.lhs <= c.rhs + tol;
  return c;
}

}  // namespace nonreactive
