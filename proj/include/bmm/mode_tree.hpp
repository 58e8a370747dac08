#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "bmm/clustering.hpp"
#include "bmm/feature_matrix.hpp"
#include "bmm/mode_stats.hpp"

namespace bmm {

enum class Linkage {
  /// Euclidean distance between member-mean centroids.
  centroid,
  /// sqrt(2 na nb / (na + nb)) * centroid distance; merge heights are monotone.
  ward,
};

struct TreeNode {
  std::size_t id = 0;
  std::optional<std::size_t> parent;
  /// Empty for leaves, exactly two ids otherwise (smaller id first).
  std::vector<std::size_t> children;
  /// Sorted row indices into the server feature matrix.
  std::vector<std::size_t> members;
  ModeStats stats;
  /// Linkage distance at which the node was formed; 0 for leaves.
  double height = 0.0;

  bool is_leaf() const { return children.empty(); }
  bool operator==(const TreeNode&) const = default;
};

/// Hierarchical data server. Nodes are indexed by id: leaves are 0..J-1 (the
/// balanced clusters), merges are J..2J-2 in merge order, the root is last.
struct ModeTree {
  std::size_t leaf_count = 0;
  std::vector<TreeNode> nodes;
  Linkage linkage = Linkage::centroid;
  std::size_t server_rows = 0;
  std::size_t dim = 0;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t root() const { return nodes.size() - 1; }
  /// Root has depth 0.
  std::size_t depth(std::size_t node_id) const;

  bool operator==(const ModeTree&) const = default;
};

/// Throws ValidationError if any structural invariant fails: single root,
/// consistent parent/child links, binary internal nodes, parent members the
/// disjoint union of child members, root covering every server row,
/// H = 2J - 1, and stats matching member counts.
void validate(const ModeTree& tree);

/// Agglomerates the J leaf clusters bottom-up, always merging the closest
/// pair of active clusters (ties: lowest (id, id) pair). Every node's stats
/// are computed from its member rows.
ModeTree build_hierarchy(const FlatClustering& leaves, const FeatureMatrix& features,
                         Linkage linkage = Linkage::centroid);

}  // namespace bmm
