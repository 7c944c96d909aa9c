#pragma once

// Domain types shared by the planner, sampler, estimator and harness.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace nonreactive {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Row norms may exceed one by at most this much before a feature is rejected.
inline constexpr double kNormCapSlack = 1e-9;

// ---------------------------------------------------------------------------
// Errors

/// Bad parameters (nonpositive regularization, alpha outside (0,1], ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (dimension mismatch, NaN input).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numerically invalid data (non-finite rewards).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ContractViolation(std::string(what) + ": dimension " + std::to_string(got) +
                            " does not match " + std::to_string(want));
  }
}

/// Deterministic seed derivation: one master seed fans out into named streams.
inline Rng split_rng(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6e72u};
  return Rng(seq);
}


inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Contexts

/// One observable context: an opaque id and the feature row of every available action.
///
/// Row a of `features` is phi(s, a). When `mean_rewards` is set the context
/// carries its own (possibly nonlinear) expected reward per action, which
/// overrides the linear model; the learning-to-rank data uses this.
struct Context {
  std::uint64_t id = 0;
  Matrix features;
  std::optional<Vector> mean_rewards;

  std::size_t num_actions() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  auto action(std::size_t a) const { return features.row(static_cast<Eigen::Index>(a)); }

  /// Throws ContractViolation unless there is at least one finite, unit-capped row.
  void validate() const {
    if (features.rows() < 1) throw ContractViolation("context has no actions");
    if (!detail::all_finite(features)) throw ContractViolation("context has non-finite features");
    const double worst = features.rowwise().norm().maxCoeff();
    if (worst > 1.0 + kNormCapSlack) {
      throw ContractViolation("context feature row norm " + std::to_string(worst) + " exceeds 1");
    }
    if (mean_rewards && static_cast<Eigen::Index>(mean_rewards->size()) != features.rows()) {
      throw ContractViolation("mean_rewards length does not match the action count");
    }
  }
};

// ---------------------------------------------------------------------------
// Bandit instance

/// Ground truth for simulation: theta*, the context distribution and the noise scale.
struct BanditInstance {
  std::string name;
  std::size_t dim = 0;
  Vector theta_star;
  double noise_std = 1.0;
  std::function<Context(Rng&)> context_sampler;
  /// |S x A| when the instance is finite; feeds the small-space confidence branch.
  std::optional<double> state_action_count;

  void validate() const {
    if (dim < 1) throw ConfigError("instance dimension must be >= 1");
    detail::require_dim(static_cast<std::size_t>(theta_star.size()), dim, "theta_star");
    if (!detail::all_finite(theta_star)) throw ConfigError("theta_star must be finite");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be >= 0");
    if (!context_sampler) throw ConfigError("instance has no context sampler");
  }

  Context draw_context(Rng& rng) const { return context_sampler(rng); }

  /// Expected reward of action `a` in `ctx`.
  double mean_reward(const Context& ctx, std::size_t a) const {
    if (ctx.mean_rewards) return (*ctx.mean_rewards)(static_cast<Eigen::Index>(a));
    return ctx.action(a).dot(theta_star);
  }

  /// Expected reward of every action in `ctx`.
  Vector mean_rewards(const Context& ctx) const {
    if (ctx.mean_rewards) return *ctx.mean_rewards;
    return ctx.features * theta_star;
  }
};

/// phi^T theta* + eta with eta ~ N(0, noise_std^2).
inline double reward_draw(const BanditInstance& instance, const Eigen::Ref<const Vector>& feature,
                          Rng& rng) {
  detail::require_dim(static_cast<std::size_t>(feature.size()), instance.dim, "reward_draw");
  if (!detail::all_finite(feature)) throw ContractViolation("reward_draw: non-finite feature");
  const double mean = feature.dot(instance.theta_star);
  if (instance.noise_std == 0.0) return mean;
  std::normal_distribution<double> noise(0.0, instance.noise_std);
  return mean + noise(rng);
}

/// Reward for playing `a` in `ctx`; honours per-context mean overrides.
inline double reward_for(const BanditInstance& instance, const Context& ctx, std::size_t a,
                         Rng& rng) {
  if (!ctx.mean_rewards) return reward_draw(instance, ctx.action(a).transpose(), rng);
  const double mean = (*ctx.mean_rewards)(static_cast<Eigen::Index>(a));
  if (instance.noise_std == 0.0) return mean;
  std::normal_distribution<double> noise(0.0, instance.noise_std);
  return mean + noise(rng);
}

// ---------------------------------------------------------------------------
// Online data

struct InteractionRecord {
  std::uint64_t context_id = 0;
  std::size_t action_index = 0;
  Vector feature;
  double reward = 0.0;
};

class InteractionDataset {
 public:
  InteractionDataset() = default;
  explicit InteractionDataset(std::size_t d) : d_(d) {}

  std::size_t dim() const { return d_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<InteractionRecord>& records() const { return records_; }
  const InteractionRecord& operator[](std::size_t i) const { return records_[i]; }

  void reserve(std::size_t n) { records_.reserve(n); }

  void push_back(InteractionRecord record) {
    detail::require_dim(static_cast<std::size_t>(record.feature.size()), d_, "dataset record");
    records_.push_back(std::move(record));
  }

  /// First `n` records as a new dataset.
  InteractionDataset prefix(std::size_t n) const {
    InteractionDataset out(d_);
    out.records_.assign(records_.begin(), records_.begin() + static_cast<std::ptrdiff_t>(std::min(n, size())));
    return out;
  }

 private:
  std::size_t d_ = 0;
  std::vector<InteractionRecord> records_;
};

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::size_t M = 0;  ///< offline contexts seen by the planner
  std::size_t N = 0;  ///< online samples collected by the sampler
  std::optional<double> alpha;  ///< defaults to N / M
  double lambda_reg = 1.0;
  double delta = 0.05;
  double epsilon = 0.1;
  std::uint64_t seed = 0;

  double resolved_alpha() const {
    if (alpha) return *alpha;
    if (M == 0) throw ConfigError("alpha defaults to N/M but M is zero");
    return static_cast<double>(N) / static_cast<double>(M);
  }

  void validate() const {
    if (M == 0) throw ConfigError("M must be >= 1");
    const double a = resolved_alpha();
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    if (!(lambda_reg > 0.0)) throw ConfigError("lambda_reg must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!alpha && N > M) throw ConfigError("N must not exceed M when alpha = N/M");
  }
};

}  // namespace nonreactive
