#pragma once

// Instance generators and the learning-to-rank ingestion pipeline.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nonreactive/core.hpp"

namespace nonreactive {

// ---------------------------------------------------------------------------
// Synthetic three-category instance

struct SyntheticSpec {
  std::size_t d = 20;
  std::size_t n_actions = 10;
  std::size_t n_categories = 3;
  double spike_variance = 1.0;
  double floor_variance = 1e-9;
  double shared_action_variance = 5.0;
  /// Raw Gaussian features are divided by this before projection onto the unit ball.
  double feature_scale = 4.0 * std::sqrt(5.0);
  double noise_std = 1.0;
};

/// Which actions carry which unit-variance coordinate in each category.
///
/// Category c (0-based) plays its signature action c on coordinate 0 and two
/// extra actions from the non-shared pool {3, 6, 7, 8, 9}: pool[2c mod 5] on
/// coordinate 1 + 2c and pool[(2c+1) mod 5] on coordinate 2 + 2c. Actions 4
/// and 5 are shared by every category and load on the last coordinate.
struct SyntheticLayout {
  struct Slot {
    std::size_t action;
    std::size_t coordinate;
    double variance;
  };
  std::vector<std::vector<Slot>> per_category;
  std::vector<std::size_t> shared_actions;
};

inline SyntheticLayout synthetic_layout(const SyntheticSpec& spec = {}) {
  if (spec.d != 20 || spec.n_actions != 10 || spec.n_categories != 3) {
    throw ConfigError("synthetic layout is defined for d = 20, 10 actions, 3 categories");
  }
  static constexpr std::size_t pool[] = {3, 6, 7, 8, 9};
  SyntheticLayout layout;
  layout.shared_actions = {4, 5};
  for (std::size_t c = 0; c < spec.n_categories; ++c) {
    std::vector<SyntheticLayout::Slot> slots;
    slots.push_back({c, 0, spec.spike_variance});
    slots.push_back({pool[(2 * c) % 5], 1 + 2 * c, spec.spike_variance});
    slots.push_back({pool[(2 * c + 1) % 5], 2 + 2 * c, spec.spike_variance});
    layout.per_category.push_back(std::move(slots));
  }
  return layout;
}

namespace detail {

/// Scales `row` down onto the unit ball when it is longer than `cap`; plain loop for bit-stable results.
inline void cap_row_norm(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, double cap) {
  double sq = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) sq += row(j) * row(j);
  const double norm = std::sqrt(sq);
  if (norm > cap) {
    for (Eigen::Index j = 0; j < row.size(); ++j) row(j) = row(j) / norm * cap;
  }
}

}  // namespace detail

/// Context category encoded in the synthetic generator's ids (low two bits).
inline std::size_t synthetic_category(const Context& ctx) { return static_cast<std::size_t>(ctx.id & 3u); }

inline BanditInstance make_synthetic(std::uint64_t seed, const SyntheticSpec& spec = {}) {
  const SyntheticLayout layout = synthetic_layout(spec);
  Rng theta_rng(seed);
  Vector theta(static_cast<Eigen::Index>(spec.d));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t j = 0; j + 1 < spec.d; ++j) theta(static_cast<Eigen::Index>(j)) = coin(theta_rng) ? 1.0 : -1.0;
  theta(static_cast<Eigen::Index>(spec.d - 1)) = 0.0;

  BanditInstance inst;
  inst.name = "synthetic";
  inst.dim = spec.d;
  inst.theta_star = theta;
  inst.noise_std = spec.noise_std;
  inst.context_sampler = [spec, layout](Rng& rng) {
    std::uniform_int_distribution<std::size_t> category(0, spec.n_categories - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t c = category(rng);
    const auto d = static_cast<Eigen::Index>(spec.d);
    const double floor_sd = std::sqrt(spec.floor_variance);

    Context ctx;
    ctx.features = Matrix::Zero(static_cast<Eigen::Index>(spec.n_actions), d);
    auto fill = [&](std::size_t action, std::size_t coord, double variance) {
      auto row = ctx.features.row(static_cast<Eigen::Index>(action));
      for (Eigen::Index j = 0; j < d; ++j) {
        const double sd = static_cast<std::size_t>(j) == coord ? std::sqrt(variance) : floor_sd;
        row(j) = sd * gauss(rng) / spec.feature_scale;
      }
      detail::cap_row_norm(row, 1.0);
    };
    for (const auto& slot : layout.per_category[c]) fill(slot.action, slot.coordinate, slot.variance);
    for (std::size_t a : layout.shared_actions) fill(a, spec.d - 1, spec.shared_action_variance);
    ctx.id = (rng() & ~std::uint64_t{3}) | c;
    return ctx;
  };
  inst.validate();
  return inst;
}

// ---------------------------------------------------------------------------
// Hard instances

/// One fixed context with features e1 for action 0 and e2 for the other A-1 actions.
inline BanditInstance make_hard_uniform(std::size_t A, Vector theta_star = Vector(), double noise_std = 1.0) {
  if (A < 2) throw ConfigError("hard_uniform needs at least two actions");
  if (theta_star.size() == 0) theta_star = Vector::Ones(2) / std::sqrt(2.0);
  Context ctx;
  ctx.id = 0;
  ctx.features = Matrix::Zero(static_cast<Eigen::Index>(A), 2);
  ctx.features(0, 0) = 1.0;
  for (Eigen::Index a = 1; a < static_cast<Eigen::Index>(A); ++a) ctx.features(a, 1) = 1.0;

  BanditInstance inst;
  inst.name = "hard_uniform";
  inst.dim = 2;
  inst.theta_star = std::move(theta_star);
  inst.noise_std = noise_std;
  inst.state_action_count = static_cast<double>(A);
  inst.context_sampler = [ctx](Rng&) { return ctx; };
  inst.validate();
  return inst;
}

/// k uniform contexts, k+1 actions, d = 2k; the last action is context specific.
inline BanditInstance make_hard_goptimal(std::size_t k, Vector theta_star = Vector(), double noise_std = 1.0) {
  if (k < 2) throw ConfigError("hard_goptimal needs k >= 2");
  const auto d = static_cast<Eigen::Index>(2 * k);
  if (theta_star.size() == 0) theta_star = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
  auto contexts = std::make_shared<std::vector<Context>>();
  for (std::size_t i = 0; i < k; ++i) {
    Context ctx;
    ctx.id = i;
    ctx.features = Matrix::Zero(static_cast<Eigen::Index>(k + 1), d);
    for (std::size_t j = 0; j < k; ++j) ctx.features(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = 1.0;
    ctx.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i + k)) = 1.0;
    contexts->push_back(std::move(ctx));
  }
  BanditInstance inst;
  inst.name = "hard_goptimal";
  inst.dim = 2 * k;
  inst.theta_star = std::move(theta_star);
  inst.noise_std = noise_std;
  inst.state_action_count = static_cast<double>(k * (k + 1));
  inst.context_sampler = [contexts](Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, contexts->size() - 1);
    return (*contexts)[pick(rng)];
  };
  inst.validate();
  return inst;
}

/// Instance on which an under-regularized covariance fails to concentrate.
///
/// Context 0 is rare (probability 1/(dM)) and only offers e1; every other
/// context s offers e_s and a direction tilted towards e1 by sqrt(d/M).
inline BanditInstance make_nonconcentrating(std::size_t d, std::size_t M, double noise_std = 1.0) {
  if (d < 2 || M < d) throw ConfigError("nonconcentrating instance needs d >= 2 and M >= d");
  const auto dd = static_cast<Eigen::Index>(d);
  const double tilt = std::sqrt(static_cast<double>(d) / static_cast<double>(M));
  auto contexts = std::make_shared<std::vector<Context>>();
  Context first;
  first.id = 0;
  first.features = Matrix::Zero(1, dd);
  first.features(0, 0) = 1.0;
  contexts->push_back(first);
  for (Eigen::Index s = 1; s < dd; ++s) {
    Context ctx;
    ctx.id = static_cast<std::uint64_t>(s);
    ctx.features = Matrix::Zero(2, dd);
    ctx.features(0, s) = 1.0;
    ctx.features(1, s) = std::sqrt(1.0 - tilt * tilt);
    ctx.features(1, 0) = tilt;
    contexts->push_back(std::move(ctx));
  }
  const double p_first = 1.0 / (static_cast<double>(d) * static_cast<double>(M));
  BanditInstance inst;
  inst.name = "nonconcentrating";
  inst.dim = d;
  inst.theta_star = Vector::Ones(dd) / std::sqrt(static_cast<double>(d));
  inst.noise_std = noise_std;
  inst.context_sampler = [contexts, p_first](Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < p_first) return (*contexts)[0];
    std::uniform_int_distribution<std::size_t> pick(1, contexts->size() - 1);
    return (*contexts)[pick(rng)];
  };
  inst.validate();
  return inst;
}

// ---------------------------------------------------------------------------
// Generic test instance

/// Contexts with `n_actions` rows drawn uniformly from the unit ball in R^d.
inline BanditInstance make_unit_ball_instance(std::size_t d, std::size_t n_actions, std::uint64_t seed) {
  if (d < 1 || n_actions < 1) throw ConfigError("unit-ball instance needs d >= 1 and at least one action");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector theta(static_cast<Eigen::Index>(d));
  for (auto& v : theta) v = gauss(rng);
  theta.normalize();
  BanditInstance inst;
  inst.name = "unit_ball";
  inst.dim = d;
  inst.theta_star = theta;
  inst.noise_std = 1.0;
  inst.context_sampler = [d, n_actions](Rng& r) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Context ctx;
    ctx.id = r();
    ctx.features.resize(static_cast<Eigen::Index>(n_actions), static_cast<Eigen::Index>(d));
    for (Eigen::Index a = 0; a < ctx.features.rows(); ++a) {
      for (Eigen::Index j = 0; j < ctx.features.cols(); ++j) ctx.features(a, j) = g(r);
      const double radius = std::pow(u(r), 1.0 / static_cast<double>(d));
      const double norm = ctx.features.row(a).norm();
      if (norm > 0.0) ctx.features.row(a) *= radius / norm;
    }
    return ctx;
  };
  inst.validate();
  return inst;
}

// ---------------------------------------------------------------------------
// Learning-to-rank data

struct RankDatasetSpec {
  std::size_t raw_dim = 700;
  std::size_t subsampled_dim = 300;
  std::size_t max_actions = 20;
  int min_relevance = 0;
  int max_relevance = 4;
  double norm_cap = 1.0;

  void validate() const {
    if (raw_dim < 1 || subsampled_dim < 1 || subsampled_dim > raw_dim) {
      throw ConfigError("rank spec needs 1 <= subsampled_dim <= raw_dim");
    }
    if (max_actions < 1) throw ConfigError("rank spec needs max_actions >= 1");
    if (!(norm_cap > 0.0)) throw ConfigError("rank spec needs a positive norm cap");
  }
};

/// Sorted 0-based raw coordinates kept after subsampling, drawn without replacement.
inline std::vector<std::size_t> subsample_indices(const RankDatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<std::size_t> all(spec.raw_dim);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates with explicit draws keeps the selection independent of std::shuffle.
  for (std::size_t i = 0; i < spec.subsampled_dim; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, spec.raw_dim - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(spec.subsampled_dim);
  std::sort(all.begin(), all.end());
  return all;
}

/// One parsed row of the sparse ranking format.
struct RankRow {
  double relevance = 0.0;
  std::uint64_t qid = 0;
  std::vector<std::pair<std::size_t, double>> entries;  ///< (1-based raw index, value)
};

/// Parses "label qid:<id> idx:val ..." with an optional trailing '#' comment.
/// Returns false for blank or comment-only lines.
inline bool parse_rank_line(std::string_view line, std::size_t line_no, const RankDatasetSpec& spec, RankRow& row) {
  if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  line = detail::trim(line);
  if (line.empty()) return false;

  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto start = line.find_first_not_of(" \t", pos);
    if (start == std::string_view::npos) break;
    auto stop = line.find_first_of(" \t", start);
    if (stop == std::string_view::npos) stop = line.size();
    tokens.push_back(line.substr(start, stop - start));
    pos = stop;
  }
  if (tokens.size() < 2) throw ParseError("expected a label and a qid", line_no);

  row = RankRow{};
  if (!detail::parse_number(tokens[0], row.relevance) || !std::isfinite(row.relevance)) {
    throw ParseError("bad relevance label '" + std::string(tokens[0]) + "'", line_no);
  }
  if (row.relevance < spec.min_relevance || row.relevance > spec.max_relevance) {
    throw ParseError("relevance label out of range", line_no);
  }
  if (tokens[1].substr(0, 4) != "qid:" || !detail::parse_number(tokens[1].substr(4), row.qid)) {
    throw ParseError("expected qid:<id>, got '" + std::string(tokens[1]) + "'", line_no);
  }
  for (std::size_t t = 2; t < tokens.size(); ++t) {
    const auto colon = tokens[t].find(':');
    std::size_t idx = 0;
    double val = 0.0;
    if (colon == std::string_view::npos || !detail::parse_number(tokens[t].substr(0, colon), idx) ||
        !detail::parse_number(tokens[t].substr(colon + 1), val) || !std::isfinite(val)) {
      throw ParseError("bad feature token '" + std::string(tokens[t]) + "'", line_no);
    }
    if (idx < 1 || idx > spec.raw_dim) {
      throw ParseError("feature index " + std::to_string(idx) + " outside [1, " + std::to_string(spec.raw_dim) + "]", line_no);
    }
    row.entries.emplace_back(idx, val);
  }
  return true;
}

struct RankSplit {
  std::vector<Context> contexts;  ///< mean_rewards holds the relevance of each document
  std::vector<std::string> warnings;
  std::size_t rows_read = 0;
  std::size_t rows_truncated = 0;
};

/// Groups rows by query (in order of first appearance), keeps the first
/// `max_actions` documents per query, projects onto `indices` and caps norms.
inline RankSplit ingest_rank_stream(std::istream& in, const RankDatasetSpec& spec,
                                    const std::vector<std::size_t>& indices) {
  spec.validate();
  std::vector<std::ptrdiff_t> column(spec.raw_dim, -1);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= spec.raw_dim) throw ConfigError("subsample index outside the raw dimension");
    column[indices[k]] = static_cast<std::ptrdiff_t>(k);
  }
  const auto d = static_cast<Eigen::Index>(indices.size());

  struct Group {
    std::uint64_t qid;
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> relevance;
  };
  std::vector<Group> groups;
  std::map<std::uint64_t, std::size_t> by_qid;
  RankSplit out;

  std::string line;
  std::size_t line_no = 0;
  RankRow row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!parse_rank_line(line, line_no, spec, row)) continue;
    ++out.rows_read;
    auto [it, inserted] = by_qid.try_emplace(row.qid, groups.size());
    if (inserted) groups.push_back(Group{row.qid, {}, {}});
    Group& g = groups[it->second];
    if (g.rows.size() >= spec.max_actions) {
      ++out.rows_truncated;
      continue;
    }
    Eigen::RowVectorXd feat = Eigen::RowVectorXd::Zero(d);
    for (auto [idx, val] : row.entries) {
      const auto col = column[idx - 1];
      if (col >= 0) feat(col) = val;
    }
    detail::cap_row_norm(feat, spec.norm_cap);
    g.rows.push_back(std::move(feat));
    g.relevance.push_back(row.relevance);
  }

  for (const Group& g : groups) {
    const bool usable = std::any_of(g.rows.begin(), g.rows.end(), [](const auto& r) { return r.squaredNorm() > 0.0; });
    if (!usable) {
      out.warnings.push_back("query " + std::to_string(g.qid) + " has no nonzero features after subsampling; skipped");
      continue;
    }
    Context ctx;
    ctx.id = g.qid;
    ctx.features.resize(static_cast<Eigen::Index>(g.rows.size()), d);
    Vector rel(static_cast<Eigen::Index>(g.rows.size()));
    for (std::size_t a = 0; a < g.rows.size(); ++a) {
      ctx.features.row(static_cast<Eigen::Index>(a)) = g.rows[a];
      rel(static_cast<Eigen::Index>(a)) = g.relevance[a];
    }
    ctx.mean_rewards = std::move(rel);
    out.contexts.push_back(std::move(ctx));
  }
  return out;
}

inline RankSplit ingest_rank_file(const std::filesystem::path& path, const RankDatasetSpec& spec,
                                  const std::vector<std::size_t>& indices) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ranking file " + path.string());
  return ingest_rank_stream(in, spec, indices);
}

struct RankDataset {
  std::vector<std::size_t> indices;
  RankSplit train;
  RankSplit valid;  ///< empty when the directory has no valid.txt
  RankSplit test;
};

/// Reads train.txt / test.txt (and valid.txt when present) from `dir`.
inline RankDataset ingest_rank_dataset(const std::filesystem::path& dir, const RankDatasetSpec& spec,
                                       std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw ConfigError("ranking dataset directory " + dir.string() +
                      " not found; it must hold train.txt and test.txt in the sparse "
                      "'label qid:<id> idx:val' format (see README, 'Learning-to-rank data')");
  }
  for (const char* required : {"train.txt", "test.txt"}) {
    if (!fs::exists(dir / required)) {
      throw ConfigError("ranking dataset is missing " + (dir / required).string() +
                        " (see README, 'Learning-to-rank data')");
    }
  }
  RankDataset out;
  out.indices = subsample_indices(spec, seed);
  out.train = ingest_rank_file(dir / "train.txt", spec, out.indices);
  out.test = ingest_rank_file(dir / "test.txt", spec, out.indices);
  if (fs::exists(dir / "valid.txt")) out.valid = ingest_rank_file(dir / "valid.txt", spec, out.indices);
  return out;
}

/// Wraps a pool of contexts as an instance that draws uniformly from the pool.
inline BanditInstance make_pool_instance(std::string name, std::shared_ptr<const std::vector<Context>> pool,
                                         double noise_std = 0.0) {
  if (!pool || pool->empty()) throw ConfigError("context pool is empty");
  BanditInstance inst;
  inst.name = std::move(name);
  inst.dim = pool->front().dim();
  inst.theta_star = Vector::Zero(static_cast<Eigen::Index>(inst.dim));
  inst.noise_std = noise_std;
  inst.context_sampler = [pool](Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, pool->size() - 1);
    return (*pool)[pick(rng)];
  };
  inst.validate();
  return inst;
}

// ---------------------------------------------------------------------------
// Stand-in generator

struct StandInSpec {
  std::size_t raw_dim = 700;
  std::size_t train_queries = 400;
  std::size_t valid_queries = 400;
  std::size_t test_queries = 200;
  std::size_t min_docs = 5;
  std::size_t max_docs = 35;
  double density = 0.3;
};

/// Writes train/valid/test files whose relevance is a saturating function of a
/// hidden linear score, so the linear model is misspecified like the real data.
inline void generate_standin(const std::filesystem::path& dir, const StandInSpec& spec, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (spec.min_docs < 1 || spec.max_docs < spec.min_docs) throw ConfigError("stand-in doc range is empty");
  fs::create_directories(dir);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> weights(spec.raw_dim);
  for (auto& w : weights) w = gauss(rng);

  std::uint64_t next_qid = 1;
  auto write = [&](const char* name, std::size_t n_queries) {
    std::ofstream out(dir / name);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    std::uniform_int_distribution<std::size_t> n_docs(spec.min_docs, spec.max_docs);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double score_scale = std::sqrt(spec.density * static_cast<double>(spec.raw_dim) / 3.0);
    for (std::size_t q = 0; q < n_queries; ++q, ++next_qid) {
      const std::size_t docs = n_docs(rng);
      for (std::size_t i = 0; i < docs; ++i) {
        std::ostringstream feats;
        double score = 0.0;
        for (std::size_t j = 0; j < spec.raw_dim; ++j) {
          if (unit(rng) >= spec.density) continue;
          const double v = std::round(unit(rng) * 1e4) / 1e4;
          score += weights[j] * v;
          feats << ' ' << (j + 1) << ':' << v;
        }
        const double z = score / score_scale;
        const double p = 1.0 / (1.0 + std::exp(-1.5 * z));
        const int label = std::clamp(static_cast<int>(std::floor(5.0 * p)), 0, 4);
        out << label << " qid:" << next_qid << feats.str() << '\n';
      }
    }
  };
  write("train.txt", spec.train_queries);
  write("valid.txt", spec.valid_queries);
  write("test.txt", spec.test_queries);
}

}  // namespace nonreactive
