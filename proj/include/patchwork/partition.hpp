#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "patchwork/common.hpp"

namespace patchwork {

// A local GP on fewer points than this is meaningless.
inline constexpr int kMinLeafSize = 5;

// Tolerance scale for "lies on this hyperplane" checks.
inline constexpr double kBoundaryTol = 1e-9;

struct TreeNode {
  // internal node fields; a node is a leaf iff left < 0
  int left = -1;
  int right = -1;
  Eigen::VectorXd direction;  // unit split vector
  double threshold = 0.0;

  int level = 0;
  Eigen::VectorXd box_lo;  // bounding box of the member points
  Eigen::VectorXd box_hi;

  // leaf fields
  int region_id = -1;
  std::vector<int> members;  // row indices into the training inputs

  bool is_leaf() const { return left < 0; }
};

// Binary space partition built by recursive bisection along the leading
// principal component of each node's points, split at the projection
// median so sibling member counts differ by at most one. The depth is
// floor(log2 K), giving 2^floor(log2 K) leaf regions. Points with
// v.x == threshold route left.
class SpatialTree {
 public:
  SpatialTree() = default;

  static SpatialTree build(const Eigen::MatrixXd& x, int k_requested, std::uint64_t seed);

  int dim() const { return dim_; }
  int leaf_count() const { return leaf_count_; }
  int depth() const { return depth_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int root() const { return 0; }
  int leaf_node(int region_id) const { return leaf_of_region_[static_cast<std::size_t>(region_id)]; }

  int route(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Route from an internal node with the first branch forced.
  int route_forced(int node_id, const Eigen::Ref<const Eigen::VectorXd>& x, bool go_left) const;

  // Highest internal node on x's routing path whose hyperplane passes
  // through x (within kBoundaryTol scale); -1 when none does.
  int find_owning_node(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // True when routing from the root reaches the given node, i.e. x lies
  // in the node's cell (closure, under the <= tie convention).
  bool cell_contains(int node_id, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  std::vector<int> internal_nodes() const;

  // test hook: swap two region labels, keeping routing behavior
  void relabel_regions(int a, int b);

 private:
  friend struct ModelSerializer;

  std::vector<TreeNode> nodes_;
  std::vector<int> leaf_of_region_;
  int dim_ = 0;
  int leaf_count_ = 0;
  int depth_ = 0;
};

// Pseudo-observation sites grouped by the pair of regions they connect;
// k < l always, entries sorted by (k, l), points are rows.
struct BoundaryEntry {
  int k = -1;
  int l = -1;
  int node_id = -1;  // internal node whose hyperplane carries the points
  Eigen::MatrixXd points;
};

class BoundarySet {
 public:
  BoundarySet() = default;
  explicit BoundarySet(std::vector<BoundaryEntry> entries);

  int entry_count() const { return static_cast<int>(entries_.size()); }
  const BoundaryEntry& entry(int i) const { return entries_[static_cast<std::size_t>(i)]; }
  const std::vector<BoundaryEntry>& entries() const { return entries_; }
  int total_points() const { return total_points_; }
  int offset(int i) const { return offsets_[static_cast<std::size_t>(i)]; }
  bool empty() const { return entries_.empty(); }
  // entry indices whose pair contains the given region
  const std::vector<int>& entries_touching(int region) const;

 private:
  std::vector<BoundaryEntry> entries_;
  std::vector<int> offsets_;
  std::vector<std::vector<int>> touching_;
  int total_points_ = 0;
};

// Draw pseudo-observation sites for every internal hyperplane: uniform
// samples over the node's bounding box, projected orthogonally onto the
// hyperplane, kept when the projection stays inside the box. Each site
// is labeled with the leaf pair reached by forcing the split one way and
// then the other. For 1-d inputs the boundary is a single point, so the
// per-node count is clamped to one. Near-duplicate sites are dropped.
BoundarySet place_pseudo_points(const SpatialTree& tree, int b_per_boundary, std::uint64_t seed);

struct AdjacencyInfo {
  std::vector<std::vector<int>> neighbors;
  std::vector<int> degree;
};

AdjacencyInfo adjacency(const BoundarySet& bset, int region_count);

}  // namespace patchwork
