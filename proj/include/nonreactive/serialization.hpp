#pragma once

// File formats: policy artifacts (JSON or binary), interaction datasets (CSV
// or binary), context bundles, ridge estimates and evaluation reports.
//
// Doubles are written in shortest round-trip form, so every text format
// reproduces matrices bit for bit.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "nonreactive/concentration.hpp"
#include "nonreactive/core.hpp"
#include "nonreactive/covariance.hpp"
#include "nonreactive/estimator.hpp"
#include "nonreactive/planner.hpp"

namespace nonreactive {

using json = nlohmann::json;

inline constexpr int kPolicyFormatVersion = 1;
inline constexpr std::array<char, 8> kPolicyMagic = {'N', 'R', 'X', 'P', 'O', 'L', '0', '1'};
inline constexpr std::array<char, 8> kDatasetMagic = {'N', 'R', 'X', 'D', 'A', 'T', '0', '1'};

namespace detail {

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline json row_major(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

inline Matrix from_row_major(const json& values, std::size_t rows, std::size_t cols) {
  if (!values.is_array() || values.size() != rows * cols) throw ParseError("matrix has the wrong number of entries", 0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = values.at(k++).get<double>();
  return m;
}

inline json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// Little-endian fixed-width binary helpers.
template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), sizeof(T))) throw ParseError("unexpected end of binary file", 0);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

inline void expect_magic(std::istream& in, const std::array<char, 8>& magic) {
  std::array<char, 8> got{};
  if (!in.read(got.data(), 8) || got != magic) throw ParseError("bad magic header", 0);
}

inline bool has_extension(const std::filesystem::path& p, const char* ext) { return p.extension() == ext; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Policy

inline json policy_to_json(const MixturePolicy& policy) {
  json snaps = json::array();
  for (const auto& s : policy.snapshots()) snaps.push_back(detail::row_major(s.matrix()));
  return json{{"format", "nonreactive-mixture-policy"},
              {"version", kPolicyFormatVersion},
              {"d", policy.dimension()},
              {"lambda_reg", policy.lambda_reg()},
              {"alpha", policy.alpha()},
              {"M", policy.total_steps()},
              {"phase_starts", policy.phase_starts()},
              {"snapshots", snaps}};
}

inline MixturePolicy policy_from_json(const json& j) {
  if (j.value("format", "") != "nonreactive-mixture-policy") throw ParseError("not a mixture policy artifact", 0);
  if (j.at("version").get<int>() != kPolicyFormatVersion) throw ParseError("unsupported policy version", 0);
  const auto d = j.at("d").get<std::size_t>();
  auto starts = j.at("phase_starts").get<std::vector<std::size_t>>();
  std::vector<CovarianceSnapshot> snaps;
  for (const auto& s : j.at("snapshots")) {
    snaps.emplace_back(detail::from_row_major(s, d, d), starts.at(snaps.size()));
  }
  return MixturePolicy(d, j.at("lambda_reg").get<double>(), j.at("alpha").get<double>(), j.at("M").get<std::size_t>(),
                       std::move(starts), std::move(snaps));
}

inline void write_policy_binary(std::ostream& out, const MixturePolicy& policy) {
  out.write(kPolicyMagic.data(), 8);
  detail::put<std::uint32_t>(out, kPolicyFormatVersion);
  detail::put<std::uint64_t>(out, policy.dimension());
  detail::put<double>(out, policy.lambda_reg());
  detail::put<double>(out, policy.alpha());
  detail::put<std::uint64_t>(out, policy.total_steps());
  detail::put<std::uint64_t>(out, policy.num_phases());
  for (auto s : policy.phase_starts()) detail::put<std::uint64_t>(out, s);
  for (const auto& snap : policy.snapshots()) {
    const Matrix& m = snap.matrix();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) detail::put<double>(out, m(i, j));
  }
}

inline MixturePolicy read_policy_binary(std::istream& in) {
  detail::expect_magic(in, kPolicyMagic);
  if (detail::get<std::uint32_t>(in) != kPolicyFormatVersion) throw ParseError("unsupported policy version", 0);
  const auto d = detail::get<std::uint64_t>(in);
  const double lambda = detail::get<double>(in);
  const double alpha = detail::get<double>(in);
  const auto M = detail::get<std::uint64_t>(in);
  const auto K = detail::get<std::uint64_t>(in);
  if (d == 0 || d > (1u << 16) || K == 0 || K > M) throw ParseError("implausible policy header", 0);
  std::vector<std::size_t> starts(K);
  for (auto& s : starts) s = detail::get<std::uint64_t>(in);
  std::vector<CovarianceSnapshot> snaps;
  snaps.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = detail::get<double>(in);
    snaps.emplace_back(std::move(m), starts[k]);
  }
  return MixturePolicy(d, lambda, alpha, M, std::move(starts), std::move(snaps));
}

/// Writes JSON for ".json" paths and the binary form otherwise.
inline void save_policy(const std::filesystem::path& path, const MixturePolicy& policy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  if (detail::has_extension(path, ".json")) out << policy_to_json(policy).dump(1) << '\n';
  else write_policy_binary(out, policy);
}

inline MixturePolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  if (detail::has_extension(path, ".json")) return policy_from_json(json::parse(in));
  return read_policy_binary(in);
}

// ---------------------------------------------------------------------------
// Dataset

/// CSV header: context_id,action_index,f0..f{d-1},reward.
inline void write_dataset_csv(std::ostream& out, const InteractionDataset& data) {
  out << "context_id,action_index";
  for (std::size_t j = 0; j < data.dim(); ++j) out << ",f" << j;
  out << ",reward\n";
  for (const auto& r : data.records()) {
    out << r.context_id << ',' << r.action_index;
    for (Eigen::Index j = 0; j < r.feature.size(); ++j) out << ',' << detail::format_double(r.feature(j));
    out << ',' << detail::format_double(r.reward) << '\n';
  }
}

inline InteractionDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  std::size_t columns = 1;
  for (char c : line) columns += c == ',';
  if (columns < 4 || line.rfind("context_id,action_index", 0) != 0) throw ParseError("bad dataset header", 1);
  const std::size_t d = columns - 3;
  InteractionDataset data(d);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(detail::trim(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != columns) throw ParseError("expected " + std::to_string(columns) + " columns", line_no);
    InteractionRecord r;
    r.feature.resize(static_cast<Eigen::Index>(d));
    bool ok = detail::parse_number(cells[0], r.context_id) && detail::parse_number(cells[1], r.action_index);
    for (std::size_t j = 0; ok && j < d; ++j) ok = detail::parse_number(cells[2 + j], r.feature(static_cast<Eigen::Index>(j)));
    ok = ok && detail::parse_number(cells.back(), r.reward);
    if (!ok) throw ParseError("malformed dataset row", line_no);
    data.push_back(std::move(r));
  }
  return data;
}

inline void write_dataset_binary(std::ostream& out, const InteractionDataset& data) {
  out.write(kDatasetMagic.data(), 8);
  detail::put<std::uint64_t>(out, data.dim());
  detail::put<std::uint64_t>(out, data.size());
  for (const auto& r : data.records()) {
    detail::put<std::uint64_t>(out, r.context_id);
    detail::put<std::uint64_t>(out, r.action_index);
    for (Eigen::Index j = 0; j < r.feature.size(); ++j) detail::put<double>(out, r.feature(j));
    detail::put<double>(out, r.reward);
  }
}

inline InteractionDataset read_dataset_binary(std::istream& in) {
  detail::expect_magic(in, kDatasetMagic);
  const auto d = detail::get<std::uint64_t>(in);
  const auto n = detail::get<std::uint64_t>(in);
  if (d == 0 || d > (1u << 16)) throw ParseError("implausible dataset dimension", 0);
  InteractionDataset data(d);
  for (std::uint64_t i = 0; i < n; ++i) {
    InteractionRecord r;
    r.context_id = detail::get<std::uint64_t>(in);
    r.action_index = detail::get<std::uint64_t>(in);
    r.feature.resize(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < r.feature.size(); ++j) r.feature(j) = detail::get<double>(in);
    r.reward = detail::get<double>(in);
    data.push_back(std::move(r));
  }
  return data;
}

/// CSV for ".csv" paths, binary otherwise.
inline void save_dataset(const std::filesystem::path& path, const InteractionDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  if (detail::has_extension(path, ".csv")) write_dataset_csv(out, data);
  else write_dataset_binary(out, data);
}

inline InteractionDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  if (detail::has_extension(path, ".csv")) return read_dataset_csv(in);
  return read_dataset_binary(in);
}

// ---------------------------------------------------------------------------
// Context bundles

inline json context_to_json(const Context& ctx) {
  json j{{"id", ctx.id}, {"actions", ctx.num_actions()}, {"features", detail::row_major(ctx.features)}};
  if (ctx.mean_rewards) j["mean_rewards"] = detail::vector_json(*ctx.mean_rewards);
  return j;
}

inline Context context_from_json(const json& j, std::size_t d) {
  Context ctx;
  ctx.id = j.at("id").get<std::uint64_t>();
  ctx.features = detail::from_row_major(j.at("features"), j.at("actions").get<std::size_t>(), d);
  if (j.contains("mean_rewards")) ctx.mean_rewards = detail::vector_from(j.at("mean_rewards"));
  return ctx;
}

inline json contexts_to_json(std::span<const Context> contexts) {
  json arr = json::array();
  for (const auto& c : contexts) arr.push_back(context_to_json(c));
  const std::size_t d = contexts.empty() ? 0 : contexts.front().dim();
  return json{{"format", "nonreactive-contexts"}, {"version", 1}, {"d", d}, {"contexts", arr}};
}

inline std::vector<Context> contexts_from_json(const json& j) {
  if (j.value("format", "") != "nonreactive-contexts") throw ParseError("not a context bundle", 0);
  const auto d = j.at("d").get<std::size_t>();
  std::vector<Context> out;
  for (const auto& c : j.at("contexts")) out.push_back(context_from_json(c, d));
  return out;
}

// ---------------------------------------------------------------------------
// Estimates and reports

inline json estimate_to_json(const RidgeEstimate& est) {
  return json{{"format", "nonreactive-ridge-estimate"},
              {"version", 1},
              {"d", est.dim()},
              {"lambda_reg", est.sigma.lambda_reg()},
              {"n_samples", est.n_samples},
              {"theta_hat", detail::vector_json(est.theta_hat)},
              {"sigma", detail::row_major(est.sigma.matrix())}};
}

inline RidgeEstimate estimate_from_json(const json& j) {
  if (j.value("format", "") != "nonreactive-ridge-estimate") throw ParseError("not a ridge estimate", 0);
  const auto d = j.at("d").get<std::size_t>();
  RegularizedCovariance sigma(d, j.at("lambda_reg").get<double>(), 1.0);
  sigma.assign_matrix(detail::from_row_major(j.at("sigma"), d, d));
  RidgeEstimate est{detail::vector_from(j.at("theta_hat")), std::move(sigma), j.at("n_samples").get<std::size_t>()};
  detail::require_dim(est.dim(), d, "estimate theta_hat");
  return est;
}

inline json report_to_json(const EvaluationReport& r) {
  json j{{"expected_max_uncertainty", r.expected_max_uncertainty},
         {"expected_max_uncertainty_se", r.expected_max_uncertainty_se},
         {"expected_suboptimality", r.expected_suboptimality},
         {"expected_suboptimality_se", r.expected_suboptimality_se},
         {"policy_value", r.policy_value},
         {"policy_value_se", r.policy_value_se},
         {"n_eval_contexts", r.n_eval_contexts}};
  if (r.expected_max_prediction_error) j["expected_max_prediction_error"] = *r.expected_max_prediction_error;
  return j;
}

inline json coverage_to_json(const CoverageReport& r) {
  return json{{"trials", r.trials},           {"violations", r.violations}, {"rate", r.rate()},
              {"target_delta", r.target_delta}, {"threshold", r.threshold()}, {"bound", r.bound_description},
              {"seed", r.seed},               {"pass", r.pass()}};
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return json::parse(in);
}

}  // namespace nonreactive
