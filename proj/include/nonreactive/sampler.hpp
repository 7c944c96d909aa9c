#pragma once

// Online phase: replay a frozen exploration policy on fresh contexts and log
// what happened. The policy is only ever read.

#include <cstddef>
#include <span>

#include "nonreactive/core.hpp"
#include "nonreactive/covariance.hpp"
#include "nonreactive/planner.hpp"

namespace nonreactive {

namespace detail {

template <typename P>
void check_policy_dim(const P& policy, std::size_t d) {
  if constexpr (requires { policy.dimension(); }) {
    require_dim(policy.dimension(), d, "policy");
  }
}

}  // namespace detail

/// Plays `policy` once in `ctx` and draws the reward.
template <ExplorationPolicy Policy>
InteractionRecord observe(const Policy& policy, const BanditInstance& instance, const Context& ctx,
                          Rng& policy_rng, Rng& noise_rng) {
  detail::require_dim(ctx.dim(), instance.dim, "observed context");
  const std::size_t a = policy.choose(ctx, policy_rng);
  if (a >= ctx.num_actions()) throw ContractViolation("policy chose a nonexistent action");
  const double r = reward_for(instance, ctx, a, noise_rng);
  return InteractionRecord{ctx.id, a, ctx.action(a).transpose(), r};
}

/// Collects one record per given context, with separate policy and noise streams.
template <ExplorationPolicy Policy>
InteractionDataset collect(const Policy& policy, const BanditInstance& instance,
                           std::span<const Context> contexts, Rng& policy_rng, Rng& noise_rng) {
  detail::check_policy_dim(policy, instance.dim);
  InteractionDataset out(instance.dim);
  out.reserve(contexts.size());
  for (const Context& ctx : contexts) out.push_back(observe(policy, instance, ctx, policy_rng, noise_rng));
  return out;
}

/// Draws N contexts from the instance and records the policy's actions and rewards.
template <ExplorationPolicy Policy>
InteractionDataset sample(const Policy& policy, const BanditInstance& instance, std::size_t N, Rng& rng) {
  if (N < 1) throw ConfigError("sampler needs N >= 1");
  instance.validate();
  detail::check_policy_dim(policy, instance.dim);
  InteractionDataset out(instance.dim);
  out.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    const Context ctx = instance.draw_context(rng);
    out.push_back(observe(policy, instance, ctx, rng, rng));
  }
  return out;
}

/// lambda*I + sum phi phi^T folded through rank-one updates (alpha = 1).
inline RegularizedCovariance dataset_covariance(const InteractionDataset& data, double lambda_reg) {
  RegularizedCovariance cov(data.dim(), lambda_reg, 1.0);
  for (const auto& r : data.records()) cov.rank_one_update(r.feature);
  cov.refresh();
  return cov;
}

}  // namespace nonreactive
