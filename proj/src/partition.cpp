#include "patchwork/partition.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

namespace patchwork {

namespace {

int floor_log2(int k) {
  int s = 0;
  while ((1 << (s + 1)) <= k) ++s;
  return s;
}

// Leading principal component of the rows indexed by `members`, by power
// iteration on the sample covariance with a seed-fixed start vector.
// Falls back to the first coordinate axis when the points carry no
// variance.
Eigen::VectorXd principal_direction(const Eigen::MatrixXd& x, const std::vector<int>& members,
                                    std::uint64_t seed) {
  const int d = static_cast<int>(x.cols());
  Eigen::VectorXd axis = Eigen::VectorXd::Zero(d);
  axis[0] = 1.0;
  if (members.size() < 2) return axis;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (int r : members) mean += x.row(r).transpose();
  mean /= static_cast<double>(members.size());

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (int r : members) {
    const Eigen::VectorXd z = x.row(r).transpose() - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(z);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(members.size() - 1);

  const double scale = cov.diagonal().sum();
  if (!(scale > 0.0)) return axis;

  Rng rng(seed);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.uniform(-1.0, 1.0);
  if (v.norm() == 0.0) v = axis;
  v.normalize();
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = cov * v;
    const double n = w.norm();
    if (!(n > scale * 1e-14)) return axis;
    v = w / n;
  }
  // fix the sign so equal data always yields the same direction
  int arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0.0) v = -v;
  return v;
}

}  // namespace

SpatialTree SpatialTree::build(const Eigen::MatrixXd& x, int k_requested, std::uint64_t seed) {
  if (k_requested < 1) throw_error(ErrorKind::Config, "spatial tree: region count must be >= 1");
  if (x.rows() < 1 || x.cols() < 1) {
    throw_error(ErrorKind::Input, "spatial tree: need at least one point with dimension >= 1");
  }

  SpatialTree tree;
  tree.dim_ = static_cast<int>(x.cols());
  tree.depth_ = floor_log2(k_requested);
  tree.leaf_count_ = 1 << tree.depth_;
  tree.leaf_of_region_.assign(static_cast<std::size_t>(tree.leaf_count_), -1);

  if (x.rows() < static_cast<Eigen::Index>(tree.leaf_count_)) {
    throw_error(ErrorKind::Config,
                "spatial tree: " + std::to_string(tree.leaf_count_) +
                    " regions exceed the capacity of " + std::to_string(x.rows()) + " points");
  }

  std::vector<int> all(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  int next_region = 0;
  std::uint64_t node_counter = 0;

  // depth-first, left child first, so node ids and rng streams are stable
  struct Frame {
    std::vector<int> members;
    int level;
  };

  const std::function<int(Frame&&)> grow = [&](Frame&& f) -> int {
    const int id = static_cast<int>(tree.nodes_.size());
    tree.nodes_.emplace_back();
    {
      TreeNode& n = tree.nodes_.back();
      n.level = f.level;
      n.box_lo = Eigen::VectorXd::Constant(tree.dim_, std::numeric_limits<double>::infinity());
      n.box_hi = Eigen::VectorXd::Constant(tree.dim_, -std::numeric_limits<double>::infinity());
      for (int r : f.members) {
        n.box_lo = n.box_lo.cwiseMin(x.row(r).transpose());
        n.box_hi = n.box_hi.cwiseMax(x.row(r).transpose());
      }
    }

    if (f.level == tree.depth_) {
      TreeNode& n = tree.nodes_[static_cast<std::size_t>(id)];
      n.region_id = next_region++;
      n.members = std::move(f.members);
      std::sort(n.members.begin(), n.members.end());
      tree.leaf_of_region_[static_cast<std::size_t>(n.region_id)] = id;
      return id;
    }

    const Eigen::VectorXd dir =
        principal_direction(x, f.members, derive_seed(seed, node_counter++));
    std::vector<double> proj(f.members.size());
    for (std::size_t i = 0; i < f.members.size(); ++i) {
      proj[i] = dir.dot(x.row(f.members[i]).transpose());
    }
    std::vector<double> sorted = proj;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median =
        (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

    Frame left{{}, f.level + 1};
    Frame right{{}, f.level + 1};
    for (std::size_t i = 0; i < f.members.size(); ++i) {
      (proj[i] <= median ? left.members : right.members).push_back(f.members[i]);
    }
    if (left.members.empty() || right.members.empty()) {
      throw_error(ErrorKind::Config, "spatial tree: degenerate split (all projections equal)");
    }

    const int left_id = grow(std::move(left));
    const int right_id = grow(std::move(right));
    TreeNode& n = tree.nodes_[static_cast<std::size_t>(id)];
    n.direction = dir;
    n.threshold = median;
    n.left = left_id;
    n.right = right_id;
    return id;
  };

  grow(Frame{std::move(all), 0});
  return tree;
}

int SpatialTree::route(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim_) throw_error(ErrorKind::Input, "route: point dimension mismatch");
  int id = root();
  while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
    id = (n.direction.dot(x) <= n.threshold) ? n.left : n.right;
  }
  return nodes_[static_cast<std::size_t>(id)].region_id;
}

int SpatialTree::route_forced(int node_id, const Eigen::Ref<const Eigen::VectorXd>& x,
                              bool go_left) const {
  if (x.size() != dim_) throw_error(ErrorKind::Input, "route: point dimension mismatch");
  const TreeNode& start = nodes_[static_cast<std::size_t>(node_id)];
  if (start.is_leaf()) throw_error(ErrorKind::Input, "route_forced: node is a leaf");
  int id = go_left ? start.left : start.right;
  while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
    id = (n.direction.dot(x) <= n.threshold) ? n.left : n.right;
  }
  return nodes_[static_cast<std::size_t>(id)].region_id;
}

int SpatialTree::find_owning_node(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim_) throw_error(ErrorKind::Input, "route: point dimension mismatch");
  int id = root();
  while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
    const double residual = n.direction.dot(x) - n.threshold;
    if (std::abs(residual) <= kBoundaryTol * (1.0 + std::abs(n.threshold))) return id;
    id = (residual <= 0.0) ? n.left : n.right;
  }
  return -1;
}

bool SpatialTree::cell_contains(int node_id, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim_) throw_error(ErrorKind::Input, "route: point dimension mismatch");
  int id = root();
  while (id != node_id) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
    if (n.is_leaf()) return false;
    id = (n.direction.dot(x) <= n.threshold) ? n.left : n.right;
  }
  return true;
}

std::vector<int> SpatialTree::internal_nodes() const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i) {
    if (!nodes_[static_cast<std::size_t>(i)].is_leaf()) out.push_back(i);
  }
  return out;
}

void SpatialTree::relabel_regions(int a, int b) {
  const int na = leaf_of_region_[static_cast<std::size_t>(a)];
  const int nb = leaf_of_region_[static_cast<std::size_t>(b)];
  std::swap(nodes_[static_cast<std::size_t>(na)].region_id,
            nodes_[static_cast<std::size_t>(nb)].region_id);
  std::swap(leaf_of_region_[static_cast<std::size_t>(a)],
            leaf_of_region_[static_cast<std::size_t>(b)]);
}

BoundarySet::BoundarySet(std::vector<BoundaryEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const BoundaryEntry& a, const BoundaryEntry& b) {
    return a.k != b.k ? a.k < b.k : a.l < b.l;
  });
  int max_region = -1;
  for (const auto& e : entries_) {
    if (e.k < 0 || e.l <= e.k) throw_error(ErrorKind::Input, "boundary set: pairs must have k < l");
    max_region = std::max(max_region, e.l);
  }
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i - 1].k == entries_[i].k && entries_[i - 1].l == entries_[i].l) {
      throw_error(ErrorKind::Input, "boundary set: duplicate region pair");
    }
  }
  offsets_.reserve(entries_.size());
  for (const auto& e : entries_) {
    offsets_.push_back(total_points_);
    total_points_ += static_cast<int>(e.points.rows());
  }
  touching_.assign(static_cast<std::size_t>(max_region + 1), {});
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    touching_[static_cast<std::size_t>(entries_[i].k)].push_back(static_cast<int>(i));
    touching_[static_cast<std::size_t>(entries_[i].l)].push_back(static_cast<int>(i));
  }
}

const std::vector<int>& BoundarySet::entries_touching(int region) const {
  static const std::vector<int> kNone;
  if (region < 0 || region >= static_cast<int>(touching_.size())) return kNone;
  return touching_[static_cast<std::size_t>(region)];
}

BoundarySet place_pseudo_points(const SpatialTree& tree, int b_per_boundary, std::uint64_t seed) {
  if (b_per_boundary < 0) {
    throw_error(ErrorKind::Input, "pseudo points: count per boundary must be >= 0");
  }
  if (b_per_boundary == 0) return BoundarySet{};

  const int d = tree.dim();
  const TreeNode& root = tree.node(tree.root());
  const double dedup_tol = 1e-9 * (root.box_hi - root.box_lo).norm();
  const int b_eff = (d == 1) ? std::min(b_per_boundary, 1) : b_per_boundary;
  const long failure_limit = 1000L * std::max(1, b_per_boundary);

  std::vector<Eigen::VectorXd> all_points;  // for global deduplication
  const auto is_duplicate = [&all_points, dedup_tol](const Eigen::VectorXd& p) {
    for (const auto& q : all_points) {
      if ((q - p).norm() < dedup_tol) return true;
    }
    return false;
  };

  std::map<std::pair<int, int>, std::pair<int, std::vector<Eigen::VectorXd>>> groups;

  for (int node_id : tree.internal_nodes()) {
    const TreeNode& n = tree.node(node_id);
    Rng rng(derive_seed(seed, 0x70736575ull + static_cast<std::uint64_t>(node_id)));

    // Near-coincident sites on one hyperplane make the boundary
    // covariance nearly singular; keep a minimum spacing between them.
    const double spacing = (d == 1) ? 0.0 : 1e-3 * (n.box_hi - n.box_lo).norm();
    std::vector<Eigen::VectorXd> node_points;
    const auto too_close = [&node_points, spacing](const Eigen::VectorXd& p) {
      for (const auto& q : node_points) {
        if ((q - p).norm() < spacing) return true;
      }
      return false;
    };

    // Sites from several pairs meeting at a cell corner put a near-null
    // cycle (for example d01 + d13 - d02 - d23 at one point) into the
    // boundary covariance; a clearance margin from every other hyperplane
    // on the candidate's routes keeps that matrix invertible.
    const auto clear_of_other_planes = [&](const Eigen::VectorXd& p) {
      int id = tree.root();
      bool after_owner = false;
      std::vector<int> pending;
      while (true) {
        if (id == node_id && !after_owner) {
          after_owner = true;
          pending.push_back(n.left);
          id = n.right;
          continue;
        }
        const TreeNode& other = tree.node(id);
        if (other.is_leaf()) {
          if (pending.empty()) break;
          id = pending.back();
          pending.pop_back();
          continue;
        }
        const double margin = 1e-2 * (other.box_hi - other.box_lo).norm();
        const double residual = other.direction.dot(p) - other.threshold;
        if (std::abs(residual) <= margin) return false;
        id = (residual <= 0.0) ? other.left : other.right;
      }
      return true;
    };

    // one projected candidate on this node's hyperplane, inside the
    // bounding box and inside the node's cell (a box point can sit on the
    // wrong side of an ancestor split, off the real interface)
    const auto draw = [&](Eigen::VectorXd& p) {
      Eigen::VectorXd u(d);
      for (int j = 0; j < d; ++j) u[j] = rng.uniform(n.box_lo[j], n.box_hi[j]);
      p = u - (n.direction.dot(u) - n.threshold) * n.direction;
      for (int j = 0; j < d; ++j) {
        if (p[j] < n.box_lo[j] || p[j] > n.box_hi[j]) return false;
      }
      return tree.cell_contains(node_id, p) && clear_of_other_planes(p);
    };
    const auto pair_of = [&](const Eigen::VectorXd& p) {
      const int a = tree.route_forced(node_id, p, true);
      const int b = tree.route_forced(node_id, p, false);
      return std::make_pair(std::min(a, b), std::max(a, b));
    };
    const auto fail = [node_id] {
      throw_error(ErrorKind::Sampling, "pseudo points: rejection sampling exhausted at node " +
                                           std::to_string(node_id) +
                                           " (degenerate boundary geometry)");
    };

    // discovery: which leaf pairs does this hyperplane separate? Shallow
    // hyperplanes cut through many leaf pairs, so the probe count scales
    // with the subtree size. A 1-d boundary is a single point.
    std::map<std::pair<int, int>, std::vector<Eigen::VectorXd>> local;
    const int leaves_below = 1 << (tree.depth() - n.level);
    const int probes = (d == 1) ? 1 : std::max({32, 8 * b_eff, 4 * leaves_below});
    long failures = 0;
    for (int got = 0; got < probes;) {
      Eigen::VectorXd p;
      if (!draw(p) || is_duplicate(p)) {
        if (++failures >= failure_limit) fail();
        continue;
      }
      failures = 0;
      auto& bucket = local[pair_of(p)];
      if (static_cast<int>(bucket.size()) < b_eff && !too_close(p)) {
        bucket.push_back(p);
        node_points.push_back(p);
        all_points.push_back(p);
      }
      ++got;
    }

    // Fill every discovered pair up to the per-boundary budget. A pair
    // whose interface is a sliver may exhaust its draw budget; it keeps
    // the sites found so far, matching its negligible share of the
    // hyperplane.
    for (auto& [pair, bucket] : local) {
      failures = 0;
      while (static_cast<int>(bucket.size()) < b_eff && failures < failure_limit) {
        Eigen::VectorXd p;
        if (!draw(p) || is_duplicate(p) || too_close(p) || pair_of(p) != pair) {
          ++failures;
          continue;
        }
        failures = 0;
        bucket.push_back(p);
        node_points.push_back(p);
        all_points.push_back(p);
      }
      groups[pair] = {node_id, std::move(bucket)};
    }
  }

  std::vector<BoundaryEntry> entries;
  entries.reserve(groups.size());
  for (auto& [pair, group] : groups) {
    BoundaryEntry e;
    e.k = pair.first;
    e.l = pair.second;
    e.node_id = group.first;
    e.points.resize(static_cast<Eigen::Index>(group.second.size()), d);
    for (std::size_t i = 0; i < group.second.size(); ++i) {
      e.points.row(static_cast<Eigen::Index>(i)) = group.second[i].transpose();
    }
    entries.push_back(std::move(e));
  }
  return BoundarySet(std::move(entries));
}

AdjacencyInfo adjacency(const BoundarySet& bset, int region_count) {
  AdjacencyInfo info;
  info.neighbors.assign(static_cast<std::size_t>(region_count), {});
  info.degree.assign(static_cast<std::size_t>(region_count), 0);
  for (const auto& e : bset.entries()) {
    if (e.l >= region_count) {
      throw_error(ErrorKind::Input, "adjacency: boundary pair references an unknown region");
    }
    info.neighbors[static_cast<std::size_t>(e.k)].push_back(e.l);
    info.neighbors[static_cast<std::size_t>(e.l)].push_back(e.k);
  }
  for (std::size_t k = 0; k < info.neighbors.size(); ++k) {
    auto& nbrs = info.neighbors[k];
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    info.degree[k] = static_cast<int>(nbrs.size());
  }
  return info;
}

}  // namespace patchwork
