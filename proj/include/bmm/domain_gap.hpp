#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bmm/feature_matrix.hpp"
#include "bmm/mode_stats.hpp"
#include "bmm/mode_tree.hpp"

namespace bmm {

inline constexpr double kDefaultCovEpsilon = 1e-6;

/// Mean and unbiased covariance (divisor m - 1) of the selected rows; the
/// covariance is symmetrized as (A + A^T) / 2. Needs at least two rows.
ModeStats gaussian_stats(const FeatureMatrix& features, std::span<const std::size_t> rows);

/// Stats of every row.
ModeStats gaussian_stats(const FeatureMatrix& features);

/// Throws ValidationError unless count >= 2, shapes agree, the covariance is
/// symmetric within 1e-9 and its eigenvalues are >= -1e-8.
void validate(const ModeStats& stats);

/// ModeStats with the eigendecomposition needed by fid() cached, so one
/// operand can be reused across many distances.
struct PreparedStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double trace = 0.0;
  double min_eigenvalue = 0.0;
  Eigen::MatrixXd sqrt_cov;      // cov^(1/2), negative eigenvalues clamped to 0
  Eigen::MatrixXd sqrt_cov_reg;  // (cov + eps I)^(1/2)
  double eps = kDefaultCovEpsilon;
};

PreparedStats prepare(const ModeStats& stats, double eps = kDefaultCovEpsilon);

/// Frechet distance between two Gaussians:
///
///   |mu_a - mu_b|^2 + Tr(S_a) + Tr(S_b) - 2 Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2))
///
/// If either covariance has an eigenvalue below eps, eps I is added to both
/// covariances in every term, so fid(s, s) stays 0. The result is clamped at 0.
double fid(const PreparedStats& a, const PreparedStats& b);
double fid(const ModeStats& a, const ModeStats& b, double eps = kDefaultCovEpsilon);

/// Tr((S_a S_b)^(1/2)) through the symmetric reformulation, no regularization.
double trace_sqrt_product(const Eigen::MatrixXd& cov_a, const Eigen::MatrixXd& cov_b);

/// L x H matrix with entry (y, x) = fid(targets[y], candidates[x]).
Eigen::MatrixXd cost_matrix(std::span<const ModeStats> targets,
                            std::span<const ModeStats> candidates,
                            double eps = kDefaultCovEpsilon);

/// Same, with every tree node as a candidate (column x = node id x).
Eigen::MatrixXd cost_matrix(const ModeTree& tree, std::span<const ModeStats> targets,
                            double eps = kDefaultCovEpsilon);

/// Header `target,<node ids...>`, one row per target mode.
void write_cost_csv(const Eigen::MatrixXd& cost, std::span<const std::size_t> node_ids,
                    const std::filesystem::path& path);

}  // namespace bmm
