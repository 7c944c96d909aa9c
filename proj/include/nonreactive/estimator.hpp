#pragma once

// Ridge extraction of theta-hat and the greedy policy, the confidence radius,
// and Monte-Carlo evaluation of the extracted policy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

#include "nonreactive/baselines.hpp"
#include "nonreactive/core.hpp"
#include "nonreactive/covariance.hpp"
#include "nonreactive/sampler.hpp"

namespace nonreactive {

struct RidgeEstimate {
  Vector theta_hat;
  RegularizedCovariance sigma;  ///< Sigma'_N, alpha = 1
  std::size_t n_samples = 0;

  std::size_t dim() const { return static_cast<std::size_t>(theta_hat.size()); }
};

/// Incremental sufficient statistics for ridge regression; fit() may be called at any time.
class RidgeAccumulator {
 public:
  RidgeAccumulator(std::size_t d, double lambda_reg) : sigma_(d, lambda_reg, 1.0), xty_(Vector::Zero(static_cast<Eigen::Index>(d))) {}

  void add(const Eigen::Ref<const Vector>& feature, double reward) {
    if (!std::isfinite(reward)) throw DataError("ridge: non-finite reward");
    sigma_.rank_one_update(feature);
    xty_.noalias() += reward * feature;
    ++n_;
  }

  void add(const InteractionRecord& r) { add(r.feature, r.reward); }

  std::size_t size() const { return n_; }

  RidgeEstimate fit() const {
    RidgeEstimate est{Vector::Zero(xty_.size()), sigma_, n_};
    est.sigma.refresh();
    if (n_ > 0) est.theta_hat = est.sigma.solve(xty_);
    return est;
  }

 private:
  RegularizedCovariance sigma_;
  Vector xty_;
  std::size_t n_ = 0;
};

/// Solves (Phi^T Phi + lambda I) theta = Phi^T r.
inline RidgeEstimate ridge_fit(const InteractionDataset& data, double lambda_reg) {
  RidgeAccumulator acc(data.dim(), lambda_reg);
  for (const auto& r : data.records()) acc.add(r);
  return acc.fit();
}

/// Greedy action argmax_a phi(s,a)^T theta-hat; ties go to the lowest index.
inline std::size_t greedy_action(const Vector& theta_hat, const Context& ctx) {
  detail::require_dim(ctx.dim(), static_cast<std::size_t>(theta_hat.size()), "greedy_action");
  return detail::argmax_lowest(ctx.features * theta_hat);
}

inline std::size_t greedy_action(const RidgeEstimate& est, const Context& ctx) {
  return greedy_action(est.theta_hat, ctx);
}

/// Ridge on the full enumeration of (context, action, reward) triples.
inline RidgeEstimate supervised_oracle_fit(const InteractionDataset& full_feedback_data, double lambda_reg) {
  return ridge_fit(full_feedback_data, lambda_reg);
}

// ---------------------------------------------------------------------------
// Confidence radius

enum class RadiusBranch { small_space, large_space };

struct ConfidenceRadius {
  double beta_sqrt = 0.0;
  RadiusBranch branch = RadiusBranch::large_space;
  double theta_norm_bound = 1.0;
  std::optional<double> small_space_term;  ///< sqrt(2 ln(2|SxA|) + ln(1/delta))
  double large_space_term = 0.0;           ///< 2 sqrt(2 d ln 6 + ln(1/delta))
};

/// sqrt(beta) = min(small, large) + sqrt(lambda) * ||theta*||.
/// delta = 1 and lambda = 0 are accepted so the formula's limits can be evaluated.
inline ConfidenceRadius beta_radius(std::size_t d, std::optional<double> state_action_count, double delta,
                                    double lambda_reg, double theta_norm_bound = 1.0) {
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1]");
  if (!(lambda_reg >= 0.0)) throw ConfigError("lambda_reg must be nonnegative");
  if (!(theta_norm_bound >= 0.0)) throw ConfigError("theta_norm_bound must be nonnegative");
  const double log_inv_delta = -std::log(delta);
  ConfidenceRadius out;
  out.theta_norm_bound = theta_norm_bound;
  out.large_space_term = 2.0 * std::sqrt(2.0 * static_cast<double>(d) * std::log(6.0) + log_inv_delta);
  double best = out.large_space_term;
  if (state_action_count) {
    if (!(*state_action_count >= 1.0)) throw ConfigError("state-action count must be >= 1");
    out.small_space_term = std::sqrt(2.0 * std::log(2.0 * *state_action_count) + log_inv_delta);
    if (*out.small_space_term < best) {
      best = *out.small_space_term;
      out.branch = RadiusBranch::small_space;
    }
  }
  out.beta_sqrt = best + std::sqrt(lambda_reg) * theta_norm_bound;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationReport {
  double expected_max_uncertainty = 0.0;
  double expected_max_uncertainty_se = 0.0;
  double expected_suboptimality = 0.0;
  double expected_suboptimality_se = 0.0;
  double policy_value = 0.0;
  double policy_value_se = 0.0;
  /// Mean over contexts of max_a |phi^T (theta* - theta-hat)|; only for linear rewards.
  std::optional<double> expected_max_prediction_error;
  std::size_t n_eval_contexts = 0;
};

namespace detail {

struct RunningMoments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double standard_error() const {
    if (n < 2) return 0.0;
    const double nn = static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - sum * sum / nn) / (nn - 1.0));
    return std::sqrt(var / nn);
  }
};

}  // namespace detail

struct EvaluateOptions {
  bool uncertainty = true;
};

/// Averages uncertainty, suboptimality and achieved value over `eval_contexts`.
inline EvaluationReport evaluate(const RidgeEstimate& est, const BanditInstance& instance,
                                 std::span<const Context> eval_contexts, EvaluateOptions opts = {}) {
  if (eval_contexts.empty()) throw ConfigError("evaluation set is empty");
  detail::require_dim(est.dim(), instance.dim, "evaluate");
  std::optional<Eigen::LLT<Matrix>> llt;
  if (opts.uncertainty) llt.emplace(detail::factorize(est.sigma.matrix()));

  detail::RunningMoments unc, gap, value, pred;
  bool linear = true;
  const Vector err = instance.theta_star - est.theta_hat;
  for (const Context& ctx : eval_contexts) {
    detail::require_dim(ctx.dim(), instance.dim, "eval context");
    const Vector means = instance.mean_rewards(ctx);
    const std::size_t a = greedy_action(est.theta_hat, ctx);
    const double v = means(static_cast<Eigen::Index>(a));
    value.add(v);
    gap.add(means.maxCoeff() - v);
    if (llt) unc.add(detail::inverse_norms(*llt, ctx.features).maxCoeff());
    if (ctx.mean_rewards) linear = false;
    else pred.add((ctx.features * err).cwiseAbs().maxCoeff());
  }
  EvaluationReport rep;
  rep.n_eval_contexts = eval_contexts.size();
  rep.expected_max_uncertainty = unc.mean();
  rep.expected_max_uncertainty_se = unc.standard_error();
  rep.expected_suboptimality = gap.mean();
  rep.expected_suboptimality_se = gap.standard_error();
  rep.policy_value = value.mean();
  rep.policy_value_se = value.standard_error();
  if (linear) rep.expected_max_prediction_error = pred.mean();
  return rep;
}

}  // namespace nonreactive
