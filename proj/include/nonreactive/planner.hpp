#pragma once

// Reward-free LinUCB over offline contexts with a determinant-doubling
// snapshot schedule. The result is a mixture over the per-step greedy
// uncertainty maximizers, stored as the K distinct snapshots and the step at
// which each one became active.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <ranges>
#include <string>
#include <vector>

#include "nonreactive/core.hpp"
#include "nonreactive/covariance.hpp"

namespace nonreactive {

/// Anything that picks an action for a context. Exploration must not read rewards.
template <typename P>
concept ExplorationPolicy = requires(const P& p, const Context& ctx, Rng& rng) {
  { p.choose(ctx, rng) } -> std::convertible_to<std::size_t>;
};

struct PlannerConfig {
  double lambda_reg = 1.0;
  double alpha = 1.0;
  /// Also record max_a ||phi||_{Sigma_m^{-1}} against the un-snapshotted matrix.
  bool record_current_uncertainty = false;

  static PlannerConfig from(const ExperimentConfig& cfg) {
    cfg.validate();
    return PlannerConfig{cfg.lambda_reg, cfg.resolved_alpha(), false};
  }
};

class MixturePolicy {
 public:
  MixturePolicy(std::size_t d, double lambda_reg, double alpha, std::size_t total_steps,
                std::vector<std::size_t> phase_starts, std::vector<CovarianceSnapshot> snapshots)
      : d_(d), lambda_(lambda_reg), alpha_(alpha), total_steps_(total_steps),
        phase_starts_(std::move(phase_starts)), snapshots_(std::move(snapshots)) {
    if (total_steps_ == 0) throw ConfigError("mixture policy needs at least one step");
    if (phase_starts_.empty() || phase_starts_.size() != snapshots_.size()) {
      throw ConfigError("phase_starts and snapshots must be nonempty and the same length");
    }
    if (phase_starts_.front() != 1) throw ConfigError("first phase must start at step 1");
    for (std::size_t k = 1; k < phase_starts_.size(); ++k) {
      if (phase_starts_[k] <= phase_starts_[k - 1]) throw ConfigError("phase_starts must increase");
    }
    if (phase_starts_.back() > total_steps_) throw ConfigError("phase starts beyond the last step");
    for (const auto& s : snapshots_) detail::require_dim(s.dim(), d_, "mixture snapshot");
  }

  std::size_t dimension() const { return d_; }
  double lambda_reg() const { return lambda_; }
  double alpha() const { return alpha_; }
  std::size_t total_steps() const { return total_steps_; }
  std::size_t num_phases() const { return snapshots_.size(); }
  const std::vector<std::size_t>& phase_starts() const { return phase_starts_; }
  const std::vector<CovarianceSnapshot>& snapshots() const { return snapshots_; }
  const CovarianceSnapshot& snapshot(std::size_t k) const { return snapshots_.at(k); }

  std::size_t phase_length(std::size_t k) const {
    const std::size_t end = k + 1 < phase_starts_.size() ? phase_starts_[k + 1] : total_steps_ + 1;
    return end - phase_starts_.at(k);
  }

  /// Phase (0-based) that owns planner step m (1-based).
  std::size_t phase_of(std::size_t m) const {
    if (m < 1 || m > total_steps_) throw ContractViolation("step outside [1, M]");
    auto it = std::upper_bound(phase_starts_.begin(), phase_starts_.end(), m);
    return static_cast<std::size_t>(std::distance(phase_starts_.begin(), it)) - 1;
  }

  /// Action that phase k's policy plays in `ctx`.
  std::size_t phase_action(std::size_t k, const Context& ctx) const {
    detail::require_dim(ctx.dim(), d_, "policy context");
    return snapshots_.at(k).most_uncertain_action(ctx.features);
  }

  /// Draws m uniformly from [1, M] and plays that step's policy.
  std::size_t choose(const Context& ctx, Rng& rng) const {
    std::uniform_int_distribution<std::size_t> step(1, total_steps_);
    return phase_action(phase_of(step(rng)), ctx);
  }

 private:
  std::size_t d_;
  double lambda_;
  double alpha_;
  std::size_t total_steps_;
  std::vector<std::size_t> phase_starts_;
  std::vector<CovarianceSnapshot> snapshots_;
};

/// Per-step record of what the planner saw.
struct UncertaintyTrace {
  /// U_m measured with the active snapshot, which is what the action rule maximizes.
  std::vector<double> snapshot_uncertainty;
  /// U_m measured with the running matrix Sigma_m; empty unless requested.
  std::vector<double> current_uncertainty;
  std::vector<std::size_t> actions;
  /// Row m is phi_m, the feature the planner added at step m (unscaled).
  Matrix chosen_features;
};

struct PlanResult {
  MixturePolicy policy;
  UncertaintyTrace trace;
  /// Sigma_{M+1}: regularization plus every scaled update.
  Matrix final_covariance;
};

/// Runs the planner over `contexts`. No reward source is reachable from here.
template <std::ranges::input_range Contexts>
  requires std::same_as<std::remove_cvref_t<std::ranges::range_reference_t<Contexts>>, Context>
PlanResult plan(Contexts&& contexts, const PlannerConfig& config) {
  std::vector<const Context*> seen;
  if constexpr (std::ranges::sized_range<Contexts>) seen.reserve(std::ranges::size(contexts));
  for (const Context& c : contexts) seen.push_back(&c);
  if (seen.empty()) throw ConfigError("planner received no contexts");

  const std::size_t d = seen.front()->dim();
  const std::size_t M = seen.size();
  RegularizedCovariance cov(d, config.lambda_reg, config.alpha);

  std::vector<std::size_t> starts;
  std::vector<CovarianceSnapshot> snaps;
  UncertaintyTrace trace;
  trace.snapshot_uncertainty.reserve(M);
  trace.actions.reserve(M);
  trace.chosen_features.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(d));
  if (config.record_current_uncertainty) trace.current_uncertainty.reserve(M);

  const double log2 = std::numbers::ln2;
  for (std::size_t m = 1; m <= M; ++m) {
    const Context& ctx = *seen[m - 1];
    detail::require_dim(ctx.dim(), d, "planner context");
    ctx.validate();

    if (m == 1 || cov.log_det() - snaps.back().log_det() > log2) {
      starts.push_back(m);
      snaps.push_back(cov.snapshot(m));
    }
    const Vector scores = snaps.back().action_uncertainties(ctx.features);
    const std::size_t a = detail::argmax_lowest(scores);
    trace.actions.push_back(a);
    trace.snapshot_uncertainty.push_back(scores(static_cast<Eigen::Index>(a)));
    if (config.record_current_uncertainty) {
      trace.current_uncertainty.push_back(cov.action_uncertainties(ctx.features).maxCoeff());
    }
    trace.chosen_features.row(static_cast<Eigen::Index>(m - 1)) = ctx.action(a);
    cov.rank_one_update(ctx.action(a).transpose());
  }
  cov.refresh();
  return PlanResult{MixturePolicy(d, config.lambda_reg, config.alpha, M, std::move(starts), std::move(snaps)),
                    std::move(trace), cov.matrix()};
}

/// Upper bound on distinct planner policies: d * log2(1 + M / (d * lambda)).
inline double switch_count_bound(std::size_t d, std::size_t M, double lambda_reg) {
  const double dd = static_cast<double>(d);
  return dd * std::log2(1.0 + static_cast<double>(M) / (dd * lambda_reg));
}

/// Bound on the planner's summed snapshot uncertainties:
/// 3 * sqrt((M / alpha) * d * ln((d * lambda + M) / d)).
inline double uncertainty_sum_bound(std::size_t d, std::size_t M, double lambda_reg, double alpha) {
  const double dd = static_cast<double>(d);
  const double mm = static_cast<double>(M);
  return 3.0 * std::sqrt((mm / alpha) * dd * std::log((dd * lambda_reg + mm) / dd));
}

}  // namespace nonreactive
