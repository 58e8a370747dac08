#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace bmm {

/// Gaussian summary of one mode: sample mean, unbiased covariance, row count.
struct ModeStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

  bool operator==(const ModeStats& other) const {
    return count == other.count && mean.size() == other.mean.size() &&
           cov.rows() == other.cov.rows() && cov.cols() == other.cov.cols() &&
           mean == other.mean && cov == other.cov;
  }
};

}  // namespace bmm
