#include "bmm/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <tuple>

#include "bmm/error.hpp"
#include "bmm/parallel.hpp"

namespace bmm {
namespace {

constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();

double squared_distance(const RowMatrix& points, std::size_t i, const RowMatrix& centroids,
                        std::size_t c) {
  return (points.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(c)))
      .squaredNorm();
}

void check_k(const FeatureMatrix& features, std::size_t k) {
  if (k == 0) throw ParameterError("cluster count k must be positive");
  if (k > features.n) {
    throw ParameterError("cluster count k = " + std::to_string(k) + " exceeds row count n = " +
                         std::to_string(features.n));
  }
}

// k-means++ seeding: first centre uniform, then proportional to squared
// distance from the nearest chosen centre. A zero total (all remaining rows
// coincide with centres) falls back to the lowest unchosen row.
RowMatrix kmeanspp(const RowMatrix& points, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  RowMatrix centroids(static_cast<Eigen::Index>(k), points.cols());
  std::vector<bool> chosen(n, false);
  std::uniform_int_distribution<std::size_t> pick_first(0, n - 1);
  std::size_t first = pick_first(rng);
  chosen[first] = true;
  centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
  std::vector<double> nearest(n);
  parallel_for(n, [&](std::size_t i) { nearest[i] = squared_distance(points, i, centroids, 0); });
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : nearest) total += v;
    std::size_t next = kUnassigned;
    if (total > 0.0) {
      double target = unit(rng) * total;
      double running = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (nearest[i] <= 0.0) continue;
        running += nearest[i];
        next = i;
        if (running > target) break;
      }
    }
    if (next == kUnassigned) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          next = i;
          break;
        }
      }
    }
    chosen[next] = true;
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(next));
    parallel_for(n, [&](std::size_t i) {
      nearest[i] = std::min(nearest[i], squared_distance(points, i, centroids, c));
    });
  }
  return centroids;
}

RowMatrix member_means(const RowMatrix& points, const std::vector<std::size_t>& assignment,
                       std::size_t k, const RowMatrix& previous) {
  RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(k), points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    sums.row(static_cast<Eigen::Index>(assignment[i])) += points.row(static_cast<Eigen::Index>(i));
    ++counts[assignment[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      sums.row(static_cast<Eigen::Index>(c)) = previous.row(static_cast<Eigen::Index>(c));
    } else {
      sums.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
    }
  }
  return sums;
}

double assignment_cost(const RowMatrix& points, const std::vector<std::size_t>& assignment,
                       const RowMatrix& centroids) {
  std::vector<double> per_row(assignment.size());
  parallel_for(assignment.size(), [&](std::size_t i) {
    per_row[i] = squared_distance(points, i, centroids, assignment[i]);
  });
  double total = 0.0;
  for (double v : per_row) total += v;
  return total;
}

double max_shift(const RowMatrix& a, const RowMatrix& b) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < a.rows(); ++c) worst = std::max(worst, (a.row(c) - b.row(c)).norm());
  return worst;
}

// Nearest centroid per row; a row keeps its current cluster when that one is
// among the nearest, otherwise the lowest index wins.
std::vector<std::size_t> nearest_assignment(const RowMatrix& points, const RowMatrix& centroids,
                                            const std::vector<std::size_t>& current) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto k = static_cast<std::size_t>(centroids.rows());
  std::vector<std::size_t> next(n);
  parallel_for(n, [&](std::size_t i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      double dist = squared_distance(points, i, centroids, c);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    if (current[i] != kUnassigned && squared_distance(points, i, centroids, current[i]) <= best_d) {
      best = current[i];
    }
    next[i] = best;
  });
  return next;
}

// Moves the farthest row of a multi-member cluster into each empty cluster.
void reseed_empty(const RowMatrix& points, std::vector<std::size_t>& assignment,
                  RowMatrix& centroids) {
  const auto k = static_cast<std::size_t>(centroids.rows());
  std::vector<std::size_t> counts(k, 0);
  for (auto c : assignment) ++counts[c];
  for (std::size_t empty = 0; empty < k; ++empty) {
    if (counts[empty] != 0) continue;
    std::size_t donor_row = kUnassigned;
    double worst = -1.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (counts[assignment[i]] < 2) continue;
      double dist = squared_distance(points, i, centroids, assignment[i]);
      if (dist > worst) {
        worst = dist;
        donor_row = i;
      }
    }
    --counts[assignment[donor_row]];
    assignment[donor_row] = empty;
    counts[empty] = 1;
    centroids.row(static_cast<Eigen::Index>(empty)) =
        points.row(static_cast<Eigen::Index>(donor_row));
  }
}

// Greedy capacity-constrained assignment over globally sorted (row, cluster)
// pairs. Exactly n mod k clusters may reach ceil(n/k); the rest stop at
// floor(n/k).
std::vector<std::size_t> balanced_assignment(const RowMatrix& points, const RowMatrix& centroids) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto k = static_cast<std::size_t>(centroids.rows());
  const std::size_t floor_size = n / k;
  const std::size_t big_clusters = n % k;

  struct Pair {
    double dist;
    std::uint32_t row;
    std::uint32_t cluster;
  };
  std::vector<Pair> pairs(n * k);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t c = 0; c < k; ++c) {
      pairs[i * k + c] = {squared_distance(points, i, centroids, c), static_cast<std::uint32_t>(i),
                          static_cast<std::uint32_t>(c)};
    }
  });
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.dist, a.row, a.cluster) < std::tie(b.dist, b.row, b.cluster);
  });

  std::vector<std::size_t> assignment(n, kUnassigned);
  std::vector<std::size_t> size(k, 0);
  std::size_t full_big = 0;
  std::size_t placed = 0;
  for (const auto& p : pairs) {
    if (assignment[p.row] != kUnassigned) continue;
    std::size_t& s = size[p.cluster];
    bool accepts = s < floor_size || (s == floor_size && full_big < big_clusters);
    if (!accepts) continue;
    assignment[p.row] = p.cluster;
    if (++s == floor_size + 1) ++full_big;
    if (++placed == n) break;
  }
  return assignment;
}

// Per-cluster running sums for exact SSE deltas: SSE_c = Q_c - |S_c|^2 / m_c.
struct ClusterSums {
  RowMatrix sum;
  std::vector<double> count;
};

ClusterSums cluster_sums(const RowMatrix& points, const std::vector<std::size_t>& assignment,
                         std::size_t k) {
  ClusterSums s{RowMatrix::Zero(static_cast<Eigen::Index>(k), points.cols()),
                std::vector<double>(k, 0.0)};
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    s.sum.row(static_cast<Eigen::Index>(assignment[i])) += points.row(static_cast<Eigen::Index>(i));
    s.count[assignment[i]] += 1.0;
  }
  return s;
}

// First-improvement local search over balance-preserving changes: pairwise
// swaps between clusters, and single moves from a ceil(n/k) cluster into a
// floor(n/k) one. Each accepted change lowers the SSE by more than a relative
// 1e-12, so the search terminates.
bool swap_refine(const RowMatrix& points, std::vector<std::size_t>& assignment, std::size_t k,
                 std::size_t max_passes) {
  const auto n = static_cast<std::size_t>(points.rows());
  auto sums = cluster_sums(points, assignment, k);
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = points.row(static_cast<Eigen::Index>(i)).squaredNorm();
  double scale = 0.0;
  for (double v : sq) scale += v;
  const double eps = 1e-12 * std::max(1.0, scale);

  bool any = false;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool improved = false;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        std::size_t ca = assignment[a];
        std::size_t cb = assignment[b];
        if (ca == cb) continue;
        auto pa = points.row(static_cast<Eigen::Index>(a));
        auto pb = points.row(static_cast<Eigen::Index>(b));
        auto sa = sums.sum.row(static_cast<Eigen::Index>(ca));
        auto sb = sums.sum.row(static_cast<Eigen::Index>(cb));
        double ma = sums.count[ca];
        double mb = sums.count[cb];
        // Q terms cancel between the two clusters; only |S|^2/m changes.
        double before = sa.squaredNorm() / ma + sb.squaredNorm() / mb;
        double after = (sa - pa + pb).squaredNorm() / ma + (sb - pb + pa).squaredNorm() / mb;
        if (after - before > eps) {
          sums.sum.row(static_cast<Eigen::Index>(ca)) += pb - pa;
          sums.sum.row(static_cast<Eigen::Index>(cb)) += pa - pb;
          std::swap(assignment[a], assignment[b]);
          improved = true;
          any = true;
        }
      }
    }
    if (n % k != 0) {
      const double floor_size = static_cast<double>(n / k);
      for (std::size_t a = 0; a < n; ++a) {
        std::size_t ca = assignment[a];
        if (sums.count[ca] != floor_size + 1.0) continue;
        auto pa = points.row(static_cast<Eigen::Index>(a));
        for (std::size_t cb = 0; cb < k; ++cb) {
          if (sums.count[cb] != floor_size) continue;
          auto sa = sums.sum.row(static_cast<Eigen::Index>(ca));
          auto sb = sums.sum.row(static_cast<Eigen::Index>(cb));
          double ma = sums.count[ca];
          double mb = sums.count[cb];
          double before = sa.squaredNorm() / ma + sb.squaredNorm() / mb;
          double after = (sa - pa).squaredNorm() / (ma - 1.0) + (sb + pa).squaredNorm() / (mb + 1.0);
          if (after - before > eps) {
            sums.sum.row(static_cast<Eigen::Index>(ca)) -= pa;
            sums.sum.row(static_cast<Eigen::Index>(cb)) += pa;
            sums.count[ca] -= 1.0;
            sums.count[cb] += 1.0;
            assignment[a] = cb;
            improved = true;
            any = true;
            break;
          }
        }
      }
    }
    if (!improved) break;
  }
  return any;
}

// Rows beyond which the quadratic swap pass is skipped.
constexpr std::size_t kSwapRowLimit = 2048;

FlatClustering run_once(const RowMatrix& points, std::size_t k, std::uint64_t seed,
                        const KMeansOptions& options, bool balanced) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::mt19937_64 rng(seed);
  FlatClustering result;
  result.k = k;
  result.centroids = kmeanspp(points, k, rng);
  result.assignment.assign(n, kUnassigned);

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    std::vector<std::size_t> next;
    if (balanced) {
      next = balanced_assignment(points, result.centroids);
      if (iter > 0) {
        // Keep the objective monotone: a greedy pass that does not strictly
        // improve on the current assignment ends the iteration.
        double current = assignment_cost(points, result.assignment, result.centroids);
        double proposed = assignment_cost(points, next, result.centroids);
        if (!(proposed < current)) {
          result.converged = true;
          break;
        }
      }
    } else {
      next = nearest_assignment(points, result.centroids, result.assignment);
      reseed_empty(points, next, result.centroids);
    }
    if (next == result.assignment) {
      result.converged = true;
      break;
    }
    result.assignment = std::move(next);
    RowMatrix updated = member_means(points, result.assignment, k, result.centroids);
    double shift = max_shift(updated, result.centroids);
    result.centroids = std::move(updated);
    result.sse_history.push_back(assignment_cost(points, result.assignment, result.centroids));
    result.iterations = iter + 1;
    if (shift <= options.tolerance) {
      result.converged = true;
      break;
    }
  }

  if (balanced && n <= kSwapRowLimit) {
    if (swap_refine(points, result.assignment, k, options.max_iterations)) {
      result.centroids = member_means(points, result.assignment, k, result.centroids);
      result.sse_history.push_back(assignment_cost(points, result.assignment, result.centroids));
    }
  }
  result.sse = assignment_cost(points, result.assignment, result.centroids);
  return result;
}

// Inputs this small are solved exactly instead of by local search.
constexpr std::size_t kExactRowLimit = 12;

// Exhaustive search over size-balanced partitions in canonical labelling: a
// row may open cluster c only once clusters 0..c-1 are open. Maximizes
// sum_c |S_c|^2 / m_c, which is total squared norm minus SSE; the first
// maximum in enumeration order wins.
std::vector<std::size_t> exact_balanced_assignment(const RowMatrix& points, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t lo = n / k;
  const std::size_t big_clusters = n % k;
  RowMatrix sum = RowMatrix::Zero(static_cast<Eigen::Index>(k), points.cols());
  std::vector<std::size_t> size(k, 0), label(n, 0), best_label;
  std::size_t open = 0, full_big = 0;
  double best = -std::numeric_limits<double>::infinity();

  auto place = [&](auto&& self, std::size_t i) -> void {
    std::size_t needed = (k - open) * lo;
    for (std::size_t c = 0; c < open; ++c) needed += lo > size[c] ? lo - size[c] : 0;
    if (n - i < needed) return;
    if (i == n) {
      double objective = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        objective += sum.row(static_cast<Eigen::Index>(c)).squaredNorm() / static_cast<double>(size[c]);
      }
      if (objective > best) {
        best = objective;
        best_label = label;
      }
      return;
    }
    const std::size_t last = std::min(open, k - 1);
    for (std::size_t c = 0; c <= last; ++c) {
      bool accepts = size[c] < lo || (size[c] == lo && full_big < big_clusters);
      if (!accepts) continue;
      const bool opens = c == open;
      const bool fills = size[c] == lo;
      label[i] = c;
      sum.row(static_cast<Eigen::Index>(c)) += points.row(static_cast<Eigen::Index>(i));
      ++size[c];
      open += opens;
      full_big += fills;
      self(self, i + 1);
      full_big -= fills;
      open -= opens;
      --size[c];
      sum.row(static_cast<Eigen::Index>(c)) -= points.row(static_cast<Eigen::Index>(i));
    }
  };
  place(place, 0);
  return best_label;
}

FlatClustering exact_balanced(const RowMatrix& points, std::size_t k) {
  FlatClustering result;
  result.k = k;
  result.assignment = exact_balanced_assignment(points, k);
  result.centroids = member_means(points, result.assignment, k,
                                  RowMatrix::Zero(static_cast<Eigen::Index>(k), points.cols()));
  result.sse = assignment_cost(points, result.assignment, result.centroids);
  result.sse_history = {result.sse};
  result.converged = true;
  return result;
}

FlatClustering fit(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                   const KMeansOptions& options, bool balanced) {
  validate(features);
  check_k(features, k);
  if (options.max_iterations == 0) throw ParameterError("max_iterations must be positive");
  RowMatrix points = to_double_rows(features);
  if (balanced && features.n <= kExactRowLimit) return exact_balanced(points, k);
  std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  FlatClustering best;
  for (std::size_t r = 0; r < restarts; ++r) {
    auto run = run_once(points, k, r == 0 ? seed : derive_seed(seed, r), options, balanced);
    if (r == 0 || run.sse < best.sse) best = std::move(run);
  }
  return best;
}

}  // namespace

std::vector<std::size_t> FlatClustering::sizes() const {
  std::vector<std::size_t> out(k, 0);
  for (auto c : assignment) ++out[c];
  return out;
}

std::vector<std::vector<std::size_t>> FlatClustering::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
  return out;
}

RowMatrix to_double_rows(const FeatureMatrix& features) {
  RowMatrix m(static_cast<Eigen::Index>(features.n), static_cast<Eigen::Index>(features.d));
  for (std::size_t i = 0; i < features.values.size(); ++i) m.data()[i] = features.values[i];
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double clustering_sse(const FeatureMatrix& features, const std::vector<std::size_t>& assignment,
                      const RowMatrix& centroids) {
  if (assignment.size() != features.n) throw ParameterError("assignment length differs from n");
  return assignment_cost(to_double_rows(features), assignment, centroids);
}

FlatClustering fit_kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                          const KMeansOptions& options) {
  return fit(features, k, seed, options, false);
}

FlatClustering fit_balanced_kmeans(const FeatureMatrix& features, std::size_t k,
                                   std::uint64_t seed, const KMeansOptions& options) {
  return fit(features, k, seed, options, true);
}

}  // namespace bmm
