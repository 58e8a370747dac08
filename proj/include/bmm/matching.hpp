#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmm/mode_tree.hpp"

namespace bmm {

/// Target modes (rows) against candidate server modes (columns).
struct AssignmentProblem {
  Eigen::MatrixXd cost;
  std::vector<std::string> target_ids;
  /// Tree node id of every column.
  std::vector<std::size_t> node_ids;

  std::size_t targets() const { return static_cast<std::size_t>(cost.rows()); }
  std::size_t candidates() const { return static_cast<std::size_t>(cost.cols()); }
};

/// Wraps a cost matrix with default labels ("T0", ...) and node ids 0..H-1
/// unless given.
AssignmentProblem make_problem(Eigen::MatrixXd cost, std::vector<std::size_t> node_ids = {});

/// Throws InfeasibleError when L > H and ValidationError on label-size
/// mismatch or any negative or non-finite cost.
void validate(const AssignmentProblem& problem);

/// Injective map from target rows to candidate columns.
struct Assignment {
  std::vector<std::size_t> sigma;
  double total_cost = 0.0;
};

/// Row-order sum of cost[i][sigma[i]], the definition of total_cost.
double assignment_cost(const Eigen::MatrixXd& cost, std::span<const std::size_t> sigma);

/// Exact minimum-cost injective assignment (rectangular Hungarian, shortest
/// augmenting paths, O(L^2 H)). Among optimal solutions the lexicographically
/// smallest sigma is returned; costs within 1e-9 * (1 + max |cost|) of each
/// other are treated as equal.
Assignment solve_assignment(const AssignmentProblem& problem);

/// Per-target argmin baseline. `sigma[i]` is empty for targets left unmatched.
struct DirectMatch {
  std::vector<std::optional<std::size_t>> sigma;
  double total_cost = 0.0;  // over matched targets

  std::size_t unmatched() const;
  std::size_t distinct_candidates() const;
};

/// Each target takes its row-argmin column (lowest column on ties). Without
/// duplicates, a target whose argmin was already taken by an earlier target
/// stays unmatched.
DirectMatch direct_match(const AssignmentProblem& problem, bool allow_duplicates);

/// Makes a direct match injective: repeats after the first are dropped, then
/// unmatched targets, in order, take their cheapest free column.
Assignment repair_direct_match(const AssignmentProblem& problem, const DirectMatch& match);

struct TargetMatch {
  std::size_t node_id = 0;
  double fid = 0.0;
};

/// The searched training set: deduplicated union of matched node members.
struct SelectionResult {
  /// Distinct matched node ids in target order.
  std::vector<std::size_t> selected_nodes;
  /// Sorted, unique server rows.
  std::vector<std::size_t> sample_rows;
  /// Per sample row: dataset label and the index (into selected_nodes) of
  /// the first selected node containing it.
  std::vector<std::string> sample_labels;
  std::vector<std::size_t> sample_strata;
  std::map<std::size_t, TargetMatch> per_target;
  std::map<std::string, std::size_t> composition;
};

/// Materializes the matched nodes as a row set. `server_labels` holds the
/// dataset label of every server row.
SelectionResult select_training_set(const ModeTree& tree, const Assignment& assignment,
                                    const AssignmentProblem& problem,
                                    std::span<const std::string> server_labels);

/// Same for a direct match; unmatched targets are absent from per_target.
SelectionResult select_training_set(const ModeTree& tree, const DirectMatch& match,
                                    const AssignmentProblem& problem,
                                    std::span<const std::string> server_labels);

}  // namespace bmm
