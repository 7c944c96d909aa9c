#pragma once

// Non-reactive comparison strategies. Each exposes the same choose(ctx, rng)
// surface as MixturePolicy so the sampler and harness treat them alike.

#include <cstddef>
#include <iostream>
#include <span>

#include "nonreactive/core.hpp"
#include "nonreactive/covariance.hpp"

namespace nonreactive {

inline std::size_t random_policy_action(const Context& ctx, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, ctx.num_actions() - 1);
  return pick(rng);
}

/// Action with the largest Euclidean feature norm; ties go to the lowest index.
inline std::size_t largest_norm_action(const Context& ctx) {
  return detail::argmax_lowest(ctx.features.rowwise().squaredNorm());
}

/// `fixed_index`, clamped to the last action when the context has fewer actions.
inline std::size_t single_action(const Context& ctx, std::size_t fixed_index, std::ostream* log = nullptr) {
  if (fixed_index < ctx.num_actions()) return fixed_index;
  const std::size_t last = ctx.num_actions() - 1;
  if (log) *log << "single_action: index " << fixed_index << " clamped to " << last << '\n';
  return last;
}

struct UniformRandomPolicy {
  std::size_t choose(const Context& ctx, Rng& rng) const { return random_policy_action(ctx, rng); }
};

struct LargestNormPolicy {
  std::size_t choose(const Context& ctx, Rng&) const { return largest_norm_action(ctx); }
};

struct SingleActionPolicy {
  std::size_t index = 0;
  std::size_t choose(const Context& ctx, Rng&) const { return single_action(ctx, index); }
};

/// Every (context, action) pair of `contexts` with a reward drawn for each.
inline InteractionDataset full_feedback(const BanditInstance& instance, std::span<const Context> contexts,
                                        Rng& noise_rng) {
  InteractionDataset out(instance.dim);
  for (const Context& ctx : contexts) {
    for (std::size_t a = 0; a < ctx.num_actions(); ++a) {
      out.push_back(InteractionRecord{ctx.id, a, ctx.action(a).transpose(), reward_for(instance, ctx, a, noise_rng)});
    }
  }
  return out;
}

}  // namespace nonreactive
