#pragma once

// Regularized cumulative covariance lambda*I + alpha * sum phi phi^T.
//
// The running Cholesky factor is kept current with O(d^2) rank-one updates so
// the log-determinant is always available; snapshots refactorize from the raw
// matrix, which also resets any drift in the running factor.

#include <cmath>
#include <cstddef>
#include <string>

#include "nonreactive/core.hpp"

namespace nonreactive {

namespace detail {

inline double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline Eigen::LLT<Matrix> factorize(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw ContractViolation("covariance lost positive definiteness");
  return llt;
}

/// Column j of the result is ||row_j||_{A^{-1}} where A = L L^T.
inline Vector inverse_norms(const Eigen::LLT<Matrix>& llt, const Matrix& rows) {
  Matrix whitened = llt.matrixL().solve(rows.transpose());
  return whitened.colwise().norm().transpose();
}

/// Lowest index among the maxima; ties go to the first action.
inline std::size_t argmax_lowest(const Vector& scores) {
  std::size_t best = 0;
  for (Eigen::Index a = 1; a < scores.size(); ++a) {
    if (scores(a) > scores(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(a);
  }
  return best;
}

}  // namespace detail

/// Frozen covariance with its factorization.
class CovarianceSnapshot {
 public:
  CovarianceSnapshot(Matrix matrix, std::size_t index)
      : matrix_(std::move(matrix)), llt_(detail::factorize(matrix_)), index_(index),
        log_det_(detail::log_det_from_llt(llt_)) {}

  std::size_t dim() const { return static_cast<std::size_t>(matrix_.rows()); }
  const Matrix& matrix() const { return matrix_; }
  std::size_t index() const { return index_; }
  double log_det() const { return log_det_; }

  /// ||x||_{Sigma^{-1}}
  double mahalanobis(const Eigen::Ref<const Vector>& x) const {
    detail::require_dim(static_cast<std::size_t>(x.size()), dim(), "mahalanobis");
    if (!x.allFinite()) throw ContractViolation("mahalanobis: non-finite input");
    return llt_.matrixL().solve(x).norm();
  }

  /// Uncertainty of every action row of `features`.
  Vector action_uncertainties(const Matrix& features) const {
    detail::require_dim(static_cast<std::size_t>(features.cols()), dim(), "action_uncertainties");
    return detail::inverse_norms(llt_, features);
  }

  /// Most uncertain action; ties go to the lowest index.
  std::size_t most_uncertain_action(const Matrix& features) const {
    return detail::argmax_lowest(action_uncertainties(features));
  }

  Vector solve(const Eigen::Ref<const Vector>& b) const { return llt_.solve(b); }

 private:
  Matrix matrix_;
  Eigen::LLT<Matrix> llt_;
  std::size_t index_;
  double log_det_;
};

class RegularizedCovariance {
 public:
  RegularizedCovariance(std::size_t d, double lambda_reg, double alpha = 1.0)
      : d_(d), lambda_(lambda_reg), alpha_(alpha) {
    if (d < 1) throw ConfigError("covariance dimension must be >= 1");
    if (!(lambda_reg > 0.0) || !std::isfinite(lambda_reg)) throw ConfigError("lambda_reg must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    const auto n = static_cast<Eigen::Index>(d);
    matrix_ = lambda_reg * Matrix::Identity(n, n);
    llt_ = detail::factorize(matrix_);
    log_det_ = static_cast<double>(d) * std::log(lambda_reg);
  }

  std::size_t dim() const { return d_; }
  double lambda_reg() const { return lambda_; }
  double alpha() const { return alpha_; }
  std::size_t update_count() const { return updates_; }
  const Matrix& matrix() const { return matrix_; }
  double log_det() const { return log_det_; }

  /// matrix += alpha * phi phi^T
  void rank_one_update(const Eigen::Ref<const Vector>& feature) {
    detail::require_dim(static_cast<std::size_t>(feature.size()), d_, "rank_one_update");
    if (!feature.allFinite()) throw ContractViolation("rank_one_update: non-finite feature");
    const double norm = feature.norm();
    if (norm > 1.0 + kNormCapSlack) {
      throw ContractViolation("rank_one_update: feature norm " + std::to_string(norm) + " exceeds 1");
    }
    matrix_.noalias() += alpha_ * feature * feature.transpose();
    matrix_ = 0.5 * (matrix_ + matrix_.transpose()).eval();
    // det(A + a v v^T) = det(A) (1 + a v^T A^{-1} v)
    const double quad = llt_.matrixL().solve(feature).squaredNorm();
    log_det_ += std::log1p(alpha_ * quad);
    llt_.rankUpdate(feature, alpha_);
    if (llt_.info() != Eigen::Success) llt_ = detail::factorize(matrix_);
    ++updates_;
  }

  /// ||x||_{Sigma^{-1}} against the current matrix.
  double mahalanobis(const Eigen::Ref<const Vector>& x) const {
    detail::require_dim(static_cast<std::size_t>(x.size()), d_, "mahalanobis");
    if (!x.allFinite()) throw ContractViolation("mahalanobis: non-finite input");
    return llt_.matrixL().solve(x).norm();
  }

  Vector action_uncertainties(const Matrix& features) const {
    detail::require_dim(static_cast<std::size_t>(features.cols()), d_, "action_uncertainties");
    return detail::inverse_norms(llt_, features);
  }

  /// Solves Sigma x = b from a fresh factorization of the raw matrix.
  Vector solve(const Eigen::Ref<const Vector>& b) const {
    detail::require_dim(static_cast<std::size_t>(b.size()), d_, "solve");
    return detail::factorize(matrix_).solve(b);
  }

  /// Refactorizes from the raw matrix and resyncs the log-determinant.
  void refresh() {
    llt_ = detail::factorize(matrix_);
    log_det_ = detail::log_det_from_llt(llt_);
  }

  /// Replaces the accumulated matrix, e.g. when loading a stored estimate.
  void assign_matrix(const Matrix& m) {
    detail::require_dim(static_cast<std::size_t>(m.rows()), d_, "assign_matrix");
    detail::require_dim(static_cast<std::size_t>(m.cols()), d_, "assign_matrix");
    matrix_ = m;
    refresh();
  }

  CovarianceSnapshot snapshot(std::size_t index) {
    refresh();
    return CovarianceSnapshot(matrix_, index);
  }

 private:
  std::size_t d_;
  double lambda_;
  double alpha_;
  Matrix matrix_;
  Eigen::LLT<Matrix> llt_;
  double log_det_ = 0.0;
  std::size_t updates_ = 0;
};

/// det(current) / det(snapshot), from log-determinants.
inline double det_ratio(const RegularizedCovariance& cov, const CovarianceSnapshot& snap) {
  detail::require_dim(snap.dim(), cov.dim(), "det_ratio");
  return std::exp(cov.log_det() - snap.log_det());
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace nonreactive
