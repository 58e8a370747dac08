#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bmm/feature_matrix.hpp"

namespace bmm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Result of k-means. `assignment[i]` is the cluster of row i; `centroids` is
/// k x d and equals the member means of the final assignment.
struct FlatClustering {
  std::size_t k = 0;
  std::vector<std::size_t> assignment;
  RowMatrix centroids;
  double sse = 0.0;
  /// SSE after each completed Lloyd update, first entry after the first pass.
  std::vector<double> sse_history;
  std::size_t iterations = 0;
  bool converged = false;

  std::vector<std::size_t> sizes() const;
  /// Sorted member rows of every cluster.
  std::vector<std::vector<std::size_t>> members() const;
};

struct KMeansOptions {
  std::size_t max_iterations = 300;
  /// Stop once no centroid moves farther than this.
  double tolerance = 1e-6;
  /// Independent k-means++ starts; the lowest-SSE run wins.
  std::size_t restarts = 1;
};

/// Lloyd iteration from k-means++ seeding. Empty clusters are re-seeded with
/// the row farthest from its centroid so every cluster keeps >= 1 member.
FlatClustering fit_kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                          const KMeansOptions& options = {});

/// Size-constrained k-means: every cluster ends with floor(n/k) or ceil(n/k)
/// rows. The assignment step is a greedy pass over all (row, cluster) pairs
/// sorted by distance; a cluster stops accepting rows at ceil(n/k), or at
/// floor(n/k) once n mod k clusters are already full. A final local search
/// applies row swaps and size-preserving single moves that lower the exact
/// SSE. Inputs of at most 12 rows are solved exactly by enumeration.
FlatClustering fit_balanced_kmeans(const FeatureMatrix& features, std::size_t k,
                                   std::uint64_t seed, const KMeansOptions& options = {});

/// Sum of squared distances from each row to its assigned centroid.
double clustering_sse(const FeatureMatrix& features, const std::vector<std::size_t>& assignment,
                      const RowMatrix& centroids);

RowMatrix to_double_rows(const FeatureMatrix& features);

/// Distinct 64-bit stream seeds derived from one user seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace bmm
