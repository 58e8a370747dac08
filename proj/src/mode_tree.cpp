#include "bmm/mode_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bmm/domain_gap.hpp"
#include "bmm/error.hpp"
#include "bmm/parallel.hpp"

namespace bmm {
namespace {

std::string node_str(std::size_t id) { return "node " + std::to_string(id); }

}  // namespace

std::size_t ModeTree::depth(std::size_t node_id) const {
  std::size_t d = 0;
  auto cur = nodes.at(node_id).parent;
  while (cur) {
    ++d;
    cur = nodes.at(*cur).parent;
  }
  return d;
}

void validate(const ModeTree& tree) {
  const std::size_t h = tree.nodes.size();
  if (tree.leaf_count == 0) throw ValidationError("tree has no leaves");
  if (h != 2 * tree.leaf_count - 1) {
    throw ValidationError("tree has " + std::to_string(h) + " nodes, expected 2J-1 = " +
                          std::to_string(2 * tree.leaf_count - 1));
  }
  std::size_t roots = 0;
  for (std::size_t i = 0; i < h; ++i) {
    const auto& node = tree.nodes[i];
    if (node.id != i) throw ValidationError(node_str(i) + " stored with id " + std::to_string(node.id));
    bool leaf_slot = i < tree.leaf_count;
    if (leaf_slot != node.is_leaf()) {
      throw ValidationError(node_str(i) + (leaf_slot ? " should be a leaf" : " should be internal"));
    }
    if (!node.is_leaf() && node.children.size() != 2) {
      throw ValidationError(node_str(i) + " has " + std::to_string(node.children.size()) +
                            " children");
    }
    if (!node.parent) {
      ++roots;
    } else if (*node.parent >= h || *node.parent <= i) {
      // Parents are always created after their children.
      throw ValidationError(node_str(i) + " has invalid parent " + std::to_string(*node.parent));
    }
    if (node.members.empty()) throw ValidationError(node_str(i) + " has no members");
    if (!std::is_sorted(node.members.begin(), node.members.end()) ||
        std::adjacent_find(node.members.begin(), node.members.end()) != node.members.end()) {
      throw ValidationError(node_str(i) + " member list is not strictly increasing");
    }
    if (node.members.back() >= tree.server_rows) {
      throw ValidationError(node_str(i) + " references a row beyond the server size");
    }
    if (node.stats.count != node.members.size() || node.stats.dim() != tree.dim ||
        static_cast<std::size_t>(node.stats.cov.rows()) != tree.dim ||
        static_cast<std::size_t>(node.stats.cov.cols()) != tree.dim) {
      throw ValidationError(node_str(i) + " stats disagree with its members or dimension");
    }
    for (auto c : node.children) {
      if (c >= h || tree.nodes[c].parent != i) {
        throw ValidationError(node_str(i) + " lists child " + std::to_string(c) +
                              " whose parent link does not point back");
      }
    }
    if (!node.is_leaf()) {
      const auto& a = tree.nodes[node.children[0]].members;
      const auto& b = tree.nodes[node.children[1]].members;
      std::vector<std::size_t> merged;
      merged.reserve(a.size() + b.size());
      std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(merged));
      if (merged != node.members) {
        throw ValidationError(node_str(i) +
                              " members are not the disjoint union of its children");
      }
    }
  }
  if (roots != 1) throw ValidationError("tree has " + std::to_string(roots) + " roots");
  if (tree.nodes.back().parent) throw ValidationError("the last node must be the root");
  if (tree.nodes.back().members.size() != tree.server_rows) {
    throw ValidationError("root does not cover every server row");
  }
}

ModeTree build_hierarchy(const FlatClustering& leaves, const FeatureMatrix& features,
                         Linkage linkage) {
  validate(features);
  const std::size_t j = leaves.k;
  if (j == 0) throw ValidationError("hierarchy needs at least one leaf cluster");
  if (leaves.assignment.size() != features.n) {
    throw ValidationError("leaf assignment length differs from the server row count");
  }
  for (auto c : leaves.assignment) {
    if (c >= j) throw ValidationError("leaf assignment references cluster " + std::to_string(c));
  }

  ModeTree tree;
  tree.leaf_count = j;
  tree.linkage = linkage;
  tree.server_rows = features.n;
  tree.dim = features.d;
  tree.nodes.resize(2 * j - 1);

  auto leaf_members = leaves.members();
  RowMatrix points = to_double_rows(features);
  const auto h = 2 * j - 1;
  RowMatrix centroid(static_cast<Eigen::Index>(h), points.cols());
  std::vector<double> weight(h, 0.0);
  for (std::size_t c = 0; c < j; ++c) {
    if (leaf_members[c].empty()) {
      throw ValidationError("leaf cluster " + std::to_string(c) + " is empty");
    }
    if (leaf_members[c].size() < 2) {
      throw InsufficientSamplesError("leaf cluster " + std::to_string(c) +
                                     " has a single row; use fewer leaves (smaller J)");
    }
    auto& node = tree.nodes[c];
    node.id = c;
    node.members = std::move(leaf_members[c]);
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(points.cols());
    for (auto r : node.members) sum += points.row(static_cast<Eigen::Index>(r));
    weight[c] = static_cast<double>(node.members.size());
    centroid.row(static_cast<Eigen::Index>(c)) = sum / weight[c];
  }

  auto linkage_distance = [&](std::size_t a, std::size_t b) {
    double dist = (centroid.row(static_cast<Eigen::Index>(a)) -
                   centroid.row(static_cast<Eigen::Index>(b)))
                      .norm();
    if (linkage == Linkage::ward) {
      dist *= std::sqrt(2.0 * weight[a] * weight[b] / (weight[a] + weight[b]));
    }
    return dist;
  };

  // Pairwise distances among active clusters, indexed by node id.
  std::vector<double> dist(h * h, 0.0);
  std::vector<std::size_t> active(j);
  for (std::size_t a = 0; a < j; ++a) active[a] = a;
  parallel_for(j, [&](std::size_t a) {
    for (std::size_t b = a + 1; b < j; ++b) dist[a * h + b] = linkage_distance(a, b);
  });

  for (std::size_t next = j; next < h; ++next) {
    // `active` stays sorted by id, so the scan visits pairs in (id, id)
    // lexicographic order and strict < keeps the first minimum.
    std::size_t best_a = 0, best_b = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        double v = dist[active[x] * h + active[y]];
        if (v < best) {
          best = v;
          best_a = active[x];
          best_b = active[y];
        }
      }
    }
    auto& node = tree.nodes[next];
    node.id = next;
    node.children = {best_a, best_b};
    node.height = best;
    tree.nodes[best_a].parent = next;
    tree.nodes[best_b].parent = next;
    const auto& ma = tree.nodes[best_a].members;
    const auto& mb = tree.nodes[best_b].members;
    node.members.reserve(ma.size() + mb.size());
    std::merge(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(node.members));
    weight[next] = weight[best_a] + weight[best_b];
    centroid.row(static_cast<Eigen::Index>(next)) =
        (weight[best_a] * centroid.row(static_cast<Eigen::Index>(best_a)) +
         weight[best_b] * centroid.row(static_cast<Eigen::Index>(best_b))) /
        weight[next];

    std::erase(active, best_a);
    std::erase(active, best_b);
    for (auto other : active) dist[other * h + next] = linkage_distance(other, next);
    active.push_back(next);
  }

  parallel_for(h, [&](std::size_t i) {
    tree.nodes[i].stats = gaussian_stats(features, tree.nodes[i].members);
  });
  return tree;
}

}  // namespace bmm
