#include "bmm/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "bmm/error.hpp"

namespace bmm {
namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kInf = std::numeric_limits<double>::infinity();

struct HungarianSolution {
  std::vector<std::size_t> col_for_row;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials, all <= 0
};

// Shortest augmenting path assignment for L <= H. Keeps
// cost(i, j) - u[i] - v[j] >= 0 with equality on matched edges; columns that
// were never matched keep v = 0.
HungarianSolution hungarian(const Eigen::MatrixXd& cost) {
  const auto l = static_cast<std::size_t>(cost.rows());
  const auto h = static_cast<std::size_t>(cost.cols());
  HungarianSolution s{std::vector<std::size_t>(l, kNone), std::vector<double>(l, 0.0),
                      std::vector<double>(h, 0.0)};
  std::vector<std::size_t> row_for_col(h, kNone);
  std::vector<double> shortest(h);
  std::vector<std::size_t> path(h);
  std::vector<std::size_t> remaining(h);
  std::vector<bool> row_seen(l), col_seen(h);

  for (std::size_t start = 0; start < l; ++start) {
    std::fill(shortest.begin(), shortest.end(), kInf);
    std::fill(row_seen.begin(), row_seen.end(), false);
    std::fill(col_seen.begin(), col_seen.end(), false);
    for (std::size_t j = 0; j < h; ++j) remaining[j] = h - 1 - j;
    std::size_t num_remaining = h;
    double min_val = 0.0;
    std::size_t sink = kNone;
    std::size_t i = start;

    while (sink == kNone) {
      row_seen[i] = true;
      std::size_t index = kNone;
      double lowest = kInf;
      for (std::size_t it = 0; it < num_remaining; ++it) {
        std::size_t j = remaining[it];
        double r = min_val + cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                   s.u[i] - s.v[j];
        if (r < shortest[j]) {
          path[j] = i;
          shortest[j] = r;
        }
        if (shortest[j] < lowest || (shortest[j] == lowest && row_for_col[j] == kNone)) {
          lowest = shortest[j];
          index = it;
        }
      }
      if (index == kNone || !std::isfinite(lowest)) {
        throw InfeasibleError("assignment problem has no feasible completion");
      }
      min_val = lowest;
      std::size_t j = remaining[index];
      if (row_for_col[j] == kNone) {
        sink = j;
      } else {
        i = row_for_col[j];
      }
      col_seen[j] = true;
      remaining[index] = remaining[--num_remaining];
    }

    s.u[start] += min_val;
    for (std::size_t r = 0; r < l; ++r) {
      if (row_seen[r] && r != start) s.u[r] += min_val - shortest[s.col_for_row[r]];
    }
    for (std::size_t j = 0; j < h; ++j) {
      if (col_seen[j]) s.v[j] -= min_val - shortest[j];
    }

    std::size_t j = sink;
    while (true) {
      std::size_t r = path[j];
      row_for_col[j] = r;
      std::swap(s.col_for_row[r], j);
      if (r == start) break;
    }
  }
  return s;
}

// Kuhn's augmenting-path bipartite matching restricted to a row subset and a
// column subset of the equality graph.
class TightGraph {
 public:
  TightGraph(std::vector<std::vector<std::size_t>> adj, std::size_t h)
      : adj_(std::move(adj)), h_(h) {}

  const std::vector<std::size_t>& row(std::size_t i) const { return adj_[i]; }

  // Can every row in `rows` be matched to a distinct unused column?
  bool rows_saturable(const std::vector<std::size_t>& rows, const std::vector<bool>& used) const {
    std::vector<std::size_t> owner(h_, kNone);
    for (auto r : rows) {
      std::vector<bool> visited(h_, false);
      if (!augment_row(r, used, owner, visited)) return false;
    }
    return true;
  }

  // Can every column in `cols` be matched to a distinct row in `rows`?
  bool cols_saturable(const std::vector<std::size_t>& cols, const std::vector<std::size_t>& rows,
                      const std::vector<bool>& used) const {
    if (cols.empty()) return true;
    if (cols.size() > rows.size()) return false;
    // Build the transposed adjacency on the fly for the allowed rows.
    std::vector<std::vector<std::size_t>> col_adj(h_);
    for (auto r : rows) {
      for (auto c : adj_[r]) {
        if (!used[c]) col_adj[c].push_back(r);
      }
    }
    std::vector<std::size_t> owner(adj_.size(), kNone);
    for (auto c : cols) {
      std::vector<bool> visited(adj_.size(), false);
      if (!augment_col(c, col_adj, owner, visited)) return false;
    }
    return true;
  }

 private:
  bool augment_row(std::size_t r, const std::vector<bool>& used, std::vector<std::size_t>& owner,
                   std::vector<bool>& visited) const {
    for (auto c : adj_[r]) {
      if (used[c] || visited[c]) continue;
      visited[c] = true;
      if (owner[c] == kNone || augment_row(owner[c], used, owner, visited)) {
        owner[c] = r;
        return true;
      }
    }
    return false;
  }

  bool augment_col(std::size_t c, const std::vector<std::vector<std::size_t>>& col_adj,
                   std::vector<std::size_t>& owner, std::vector<bool>& visited) const {
    for (auto r : col_adj[c]) {
      if (visited[r]) continue;
      visited[r] = true;
      if (owner[r] == kNone || augment_col(owner[r], col_adj, owner, visited)) {
        owner[r] = c;
        return true;
      }
    }
    return false;
  }

  std::vector<std::vector<std::size_t>> adj_;
  std::size_t h_;
};

SelectionResult build_selection(const ModeTree& tree, const AssignmentProblem& problem,
                                const std::vector<std::optional<std::size_t>>& sigma,
                                std::span<const std::string> server_labels) {
  if (server_labels.size() != tree.server_rows) {
    throw ParameterError("server label count differs from the tree's server rows");
  }
  SelectionResult result;
  std::vector<std::size_t> stratum_of(tree.server_rows, kNone);
  for (std::size_t t = 0; t < sigma.size(); ++t) {
    if (!sigma[t]) continue;
    std::size_t col = *sigma[t];
    if (col >= problem.node_ids.size()) throw ParameterError("assignment column out of range");
    std::size_t node_id = problem.node_ids[col];
    if (node_id >= tree.nodes.size()) {
      throw ParameterError("assignment maps to unknown tree node " + std::to_string(node_id));
    }
    result.per_target[t] = {node_id, problem.cost(static_cast<Eigen::Index>(t),
                                                  static_cast<Eigen::Index>(col))};
    if (std::find(result.selected_nodes.begin(), result.selected_nodes.end(), node_id) !=
        result.selected_nodes.end()) {
      continue;
    }
    std::size_t stratum = result.selected_nodes.size();
    result.selected_nodes.push_back(node_id);
    for (auto r : tree.nodes[node_id].members) {
      if (stratum_of[r] == kNone) stratum_of[r] = stratum;
    }
  }
  for (std::size_t r = 0; r < stratum_of.size(); ++r) {
    if (stratum_of[r] == kNone) continue;
    result.sample_rows.push_back(r);
    result.sample_labels.push_back(server_labels[r]);
    result.sample_strata.push_back(stratum_of[r]);
    ++result.composition[server_labels[r]];
  }
  return result;
}

}  // namespace

AssignmentProblem make_problem(Eigen::MatrixXd cost, std::vector<std::size_t> node_ids) {
  AssignmentProblem p;
  const auto l = static_cast<std::size_t>(cost.rows());
  const auto h = static_cast<std::size_t>(cost.cols());
  p.cost = std::move(cost);
  for (std::size_t i = 0; i < l; ++i) p.target_ids.push_back("T" + std::to_string(i));
  if (node_ids.empty()) {
    node_ids.resize(h);
    for (std::size_t j = 0; j < h; ++j) node_ids[j] = j;
  }
  p.node_ids = std::move(node_ids);
  return p;
}

void validate(const AssignmentProblem& problem) {
  const auto l = problem.targets();
  const auto h = problem.candidates();
  if (problem.target_ids.size() != l || problem.node_ids.size() != h) {
    throw ValidationError("assignment labels do not match the cost matrix shape");
  }
  if (l > h) {
    throw InfeasibleError("cannot match " + std::to_string(l) + " target modes injectively to " +
                          std::to_string(h) + " candidates");
  }
  for (Eigen::Index i = 0; i < problem.cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < problem.cost.cols(); ++j) {
      double c = problem.cost(i, j);
      if (!std::isfinite(c) || c < 0.0) {
        throw ValidationError("cost(" + std::to_string(i) + ", " + std::to_string(j) +
                              ") = " + std::to_string(c) + " is not a finite non-negative value");
      }
    }
  }
}

double assignment_cost(const Eigen::MatrixXd& cost, std::span<const std::size_t> sigma) {
  double total = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    total += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(sigma[i]));
  }
  return total;
}

Assignment solve_assignment(const AssignmentProblem& problem) {
  validate(problem);
  const auto l = problem.targets();
  const auto h = problem.candidates();
  Assignment out;
  if (l == 0) return out;

  auto hs = hungarian(problem.cost);
  const double tol = 1e-9 * (1.0 + problem.cost.cwiseAbs().maxCoeff());

  // Every optimum uses only tight edges and covers every column with a
  // strictly negative potential (complementary slackness).
  std::vector<std::vector<std::size_t>> adj(l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      double reduced = problem.cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                       hs.u[i] - hs.v[j];
      if (reduced <= tol || j == hs.col_for_row[i]) adj[i].push_back(j);
    }
  }
  std::vector<bool> must(h, false);
  for (std::size_t j = 0; j < h; ++j) must[j] = hs.v[j] < -tol;
  TightGraph graph(std::move(adj), h);

  // Fix rows in order to their smallest tight column that still admits a
  // completion. Row- and column-side saturation are checked separately; by
  // the Mendelsohn-Dulmage theorem both together imply a joint matching.
  std::vector<bool> used(h, false);
  out.sigma.assign(l, kNone);
  for (std::size_t i = 0; i < l; ++i) {
    std::vector<std::size_t> rest;
    for (std::size_t r = i + 1; r < l; ++r) rest.push_back(r);
    for (auto j : graph.row(i)) {
      if (used[j]) continue;
      used[j] = true;
      std::vector<std::size_t> open_must;
      for (std::size_t c = 0; c < h; ++c) {
        if (must[c] && !used[c]) open_must.push_back(c);
      }
      if (graph.rows_saturable(rest, used) && graph.cols_saturable(open_must, rest, used)) {
        out.sigma[i] = j;
        break;
      }
      used[j] = false;
    }
    if (out.sigma[i] == kNone) {
      // Unreachable with consistent potentials; fall back to the solver's
      // own optimum rather than return a partial map.
      out.sigma = hs.col_for_row;
      break;
    }
  }
  out.total_cost = assignment_cost(problem.cost, out.sigma);
  return out;
}

std::size_t DirectMatch::unmatched() const {
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [](const auto& s) { return !s.has_value(); }));
}

std::size_t DirectMatch::distinct_candidates() const {
  std::set<std::size_t> seen;
  for (const auto& s : sigma) {
    if (s) seen.insert(*s);
  }
  return seen.size();
}

DirectMatch direct_match(const AssignmentProblem& problem, bool allow_duplicates) {
  validate(problem);
  DirectMatch dm;
  std::vector<bool> taken(problem.candidates(), false);
  for (Eigen::Index i = 0; i < problem.cost.rows(); ++i) {
    Eigen::Index best = 0;
    problem.cost.row(i).minCoeff(&best);
    auto col = static_cast<std::size_t>(best);
    if (!allow_duplicates && taken[col]) {
      dm.sigma.emplace_back(std::nullopt);
      continue;
    }
    taken[col] = true;
    dm.sigma.emplace_back(col);
    dm.total_cost += problem.cost(i, best);
  }
  return dm;
}

Assignment repair_direct_match(const AssignmentProblem& problem, const DirectMatch& match) {
  validate(problem);
  if (match.sigma.size() != problem.targets()) {
    throw ParameterError("direct match length differs from the target count");
  }
  const auto h = problem.candidates();
  std::vector<bool> taken(h, false);
  std::vector<std::size_t> sigma(match.sigma.size(), kNone);
  for (std::size_t i = 0; i < match.sigma.size(); ++i) {
    if (match.sigma[i] && !taken[*match.sigma[i]]) {
      sigma[i] = *match.sigma[i];
      taken[sigma[i]] = true;
    }
  }
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] != kNone) continue;
    double best = kInf;
    for (std::size_t j = 0; j < h; ++j) {
      double c = problem.cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (!taken[j] && c < best) {
        best = c;
        sigma[i] = j;
      }
    }
    taken[sigma[i]] = true;
  }
  return {sigma, assignment_cost(problem.cost, sigma)};
}

SelectionResult select_training_set(const ModeTree& tree, const Assignment& assignment,
                                    const AssignmentProblem& problem,
                                    std::span<const std::string> server_labels) {
  if (assignment.sigma.size() != problem.targets()) {
    throw ParameterError("assignment length differs from the target count");
  }
  std::vector<std::optional<std::size_t>> sigma(assignment.sigma.begin(), assignment.sigma.end());
  return build_selection(tree, problem, sigma, server_labels);
}

SelectionResult select_training_set(const ModeTree& tree, const DirectMatch& match,
                                    const AssignmentProblem& problem,
                                    std::span<const std::string> server_labels) {
  if (match.sigma.size() != problem.targets()) {
    throw ParameterError("direct match length differs from the target count");
  }
  return build_selection(tree, problem, match.sigma, server_labels);
}

}  // namespace bmm
