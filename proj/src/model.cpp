#include "patchwork/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "patchwork/likelihood.hpp"

namespace patchwork {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<RegionData> make_regions(const SpatialTree& tree, const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& y_centered,
                                     const HyperParams& params) {
  if (x.rows() != y_centered.size()) {
    throw_error(ErrorKind::Input, "regions: inputs and responses disagree in length");
  }
  params.validate(tree.leaf_count());

  std::vector<RegionData> regions(static_cast<std::size_t>(tree.leaf_count()));
  for (int k = 0; k < tree.leaf_count(); ++k) {
    const TreeNode& leaf = tree.node(tree.leaf_node(k));
    RegionData& reg = regions[static_cast<std::size_t>(k)];
    reg.region_id = k;
    reg.kernel = params.for_region(k);
    reg.rows = leaf.members;
    if (reg.rows.empty()) {
      throw_error(ErrorKind::Config, "regions: region " + std::to_string(k) + " is empty");
    }
    reg.inputs.resize(static_cast<Eigen::Index>(reg.rows.size()), x.cols());
    reg.targets.resize(static_cast<Eigen::Index>(reg.rows.size()));
    for (std::size_t i = 0; i < reg.rows.size(); ++i) {
      reg.inputs.row(static_cast<Eigen::Index>(i)) = x.row(reg.rows[i]);
      reg.targets[static_cast<Eigen::Index>(i)] = y_centered[reg.rows[i]];
    }
  }
  return regions;
}

namespace {

// cov(delta_{k,l}, delta_{u,v}) on the two entries' site sets, entries
// given with k < l and u < v. Empty when the pairs share no region.
Eigen::MatrixXd boundary_block(const std::vector<RegionData>& regions, const BoundaryEntry& p,
                               const BoundaryEntry& q) {
  const auto kernel_of = [&](int region) -> const KernelSpec& {
    return regions[static_cast<std::size_t>(region)].kernel;
  };
  if (p.k == q.k && p.l == q.l) {
    return cross_cov(kernel_of(p.k), p.points, q.points) +
           cross_cov(kernel_of(p.l), p.points, q.points);
  }
  if (p.k == q.k) return cross_cov(kernel_of(p.k), p.points, q.points);
  if (p.l == q.l) return cross_cov(kernel_of(p.l), p.points, q.points);
  if (p.k == q.l) return -cross_cov(kernel_of(p.k), p.points, q.points);
  if (p.l == q.k) return -cross_cov(kernel_of(p.l), p.points, q.points);
  return {};
}

bool pairs_share_region(const BoundaryEntry& p, const BoundaryEntry& q) {
  return p.k == q.k || p.k == q.l || p.l == q.k || p.l == q.l;
}

}  // namespace

AugmentedCov assemble(const std::vector<RegionData>& regions, const BoundarySet& bset,
                      double delta_jitter) {
  AugmentedCov cov;
  cov.delta_jitter = delta_jitter;

  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(regions.size());
  for (const auto& reg : regions) {
    if (reg.inputs.rows() == 0) {
      throw_error(ErrorKind::Config,
                  "assemble: region " + std::to_string(reg.region_id) + " is empty");
    }
    Eigen::MatrixXd block = cross_cov(reg.kernel, reg.inputs, reg.inputs);
    block.diagonal().array() += reg.kernel.noise_var;
    blocks.push_back(std::move(block));
  }
  cov.data_cov = BlockDiag(std::move(blocks));

  cov.cross.reserve(static_cast<std::size_t>(2 * bset.entry_count()));
  for (int e = 0; e < bset.entry_count(); ++e) {
    const BoundaryEntry& entry = bset.entry(e);
    if (entry.l >= static_cast<int>(regions.size())) {
      throw_error(ErrorKind::Config, "assemble: boundary pair references an unknown region");
    }
    const RegionData& rk = regions[static_cast<std::size_t>(entry.k)];
    const RegionData& rl = regions[static_cast<std::size_t>(entry.l)];
    cov.cross.push_back({entry.k, e, cross_cov(rk.kernel, rk.inputs, entry.points)});
    cov.cross.push_back({entry.l, e, -cross_cov(rl.kernel, rl.inputs, entry.points)});
  }

  std::vector<SymSparse::Entry> triplets;
  for (int p = 0; p < bset.entry_count(); ++p) {
    const BoundaryEntry& ep = bset.entry(p);
    for (int q = p; q < bset.entry_count(); ++q) {
      const BoundaryEntry& eq = bset.entry(q);
      if (!pairs_share_region(ep, eq)) continue;
      const Eigen::MatrixXd block = boundary_block(regions, ep, eq);
      const int off_p = bset.offset(p);
      const int off_q = bset.offset(q);
      for (Eigen::Index r = 0; r < block.rows(); ++r) {
        const Eigen::Index c0 = (p == q) ? r : 0;
        for (Eigen::Index c = c0; c < block.cols(); ++c) {
          triplets.push_back(
              {off_p + static_cast<int>(r), off_q + static_cast<int>(c), block(r, c)});
        }
      }
    }
  }
  cov.boundary_cov = SymSparse::from_triplets(bset.total_points(), std::move(triplets));
  return cov;
}

AugmentedCov assemble(const SpatialTree& tree, const BoundarySet& bset, const HyperParams& params,
                      const Eigen::MatrixXd& x, const Eigen::VectorXd& y_centered) {
  return assemble(make_regions(tree, x, y_centered, params), bset, boundary_jitter(params));
}

FactoredAugmented::FactoredAugmented(const AugmentedCov& cov, const BoundarySet& bset)
    : data_dim_(cov.data_cov.dim()),
      delta_dim_(bset.total_points()),
      data_chol_(cov.data_cov),
      cross_(cov.cross) {
  entry_offsets_.resize(static_cast<std::size_t>(bset.entry_count()));
  for (int e = 0; e < bset.entry_count(); ++e) {
    entry_offsets_[static_cast<std::size_t>(e)] = bset.offset(e);
  }

  whitened_.reserve(cross_.size());
  for (const auto& blk : cross_) {
    whitened_.push_back({blk.region, blk.entry, data_chol_.solve_block(blk.region, blk.values)});
  }

  const auto cross_of = [this](int region, int entry) -> const CrossBlock& {
    const CrossBlock& first = cross_[static_cast<std::size_t>(2 * entry)];
    return first.region == region ? first : cross_[static_cast<std::size_t>(2 * entry + 1)];
  };
  const auto whitened_of = [this](int region, int entry) -> const CrossBlock& {
    const CrossBlock& first = whitened_[static_cast<std::size_t>(2 * entry)];
    return first.region == region ? first : whitened_[static_cast<std::size_t>(2 * entry + 1)];
  };
  const auto locate_entry = [this](int point_index) {
    const auto it =
        std::upper_bound(entry_offsets_.begin(), entry_offsets_.end(), point_index);
    return static_cast<int>(it - entry_offsets_.begin()) - 1;
  };

  // Schur complement S = C_dd - C_Dd^T C_DD^-1 C_Dd, assembled per pair of
  // boundary entries. The data coupling is nonzero only for pairs that
  // already share a region, so the sparsity pattern of C_dd is preserved.
  std::map<std::pair<int, int>, Eigen::MatrixXd> blocks;
  const auto block_at = [&blocks, &bset](int p, int q) -> Eigen::MatrixXd& {
    auto& block = blocks[{p, q}];
    if (block.size() == 0) {
      block = Eigen::MatrixXd::Zero(bset.entry(p).points.rows(), bset.entry(q).points.rows());
    }
    return block;
  };

  for (const auto& e : cov.boundary_cov.entries()) {
    const int p = locate_entry(e.row);
    const int q = locate_entry(e.col);
    Eigen::MatrixXd& block = block_at(p, q);
    const int r = e.row - entry_offsets_[static_cast<std::size_t>(p)];
    const int c = e.col - entry_offsets_[static_cast<std::size_t>(q)];
    block(r, c) = e.value;
    if (p == q && r != c) block(c, r) = e.value;
  }

  for (int region = 0; region < data_chol_.block_count(); ++region) {
    const auto& touching = bset.entries_touching(region);
    for (std::size_t a = 0; a < touching.size(); ++a) {
      for (std::size_t b = a; b < touching.size(); ++b) {
        int p = touching[a];
        int q = touching[b];
        if (p > q) std::swap(p, q);
        block_at(p, q).noalias() -=
            cross_of(region, p).values.transpose() * whitened_of(region, q).values;
      }
    }
  }

  std::vector<SymSparse::Entry> triplets;
  for (const auto& [pq, block] : blocks) {
    const int off_p = entry_offsets_[static_cast<std::size_t>(pq.first)];
    const int off_q = entry_offsets_[static_cast<std::size_t>(pq.second)];
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      const Eigen::Index c0 = (pq.first == pq.second) ? r : 0;
      for (Eigen::Index c = c0; c < block.cols(); ++c) {
        triplets.push_back(
            {off_p + static_cast<int>(r), off_q + static_cast<int>(c), block(r, c)});
      }
    }
  }
  schur_ = SymSparse::from_triplets(delta_dim_, std::move(triplets));
  schur_chol_ = SparseCholesky(schur_, cov.delta_jitter);
  boundary_chol_ = SparseCholesky(cov.boundary_cov, cov.delta_jitter);
}

FactoredAugmented FactoredAugmented::from_parts(FactoredAugmentedParts&& parts) {
  FactoredAugmented out;
  out.data_dim_ = parts.data_dim;
  out.delta_dim_ = parts.delta_dim;
  out.entry_offsets_ = std::move(parts.entry_offsets);
  out.data_chol_ = std::move(parts.data_chol);
  out.cross_ = std::move(parts.cross);
  out.whitened_ = std::move(parts.whitened);
  out.schur_ = std::move(parts.schur);
  out.boundary_chol_ = std::move(parts.boundary_chol);
  out.schur_chol_ = std::move(parts.schur_chol);
  if (out.data_chol_.dim() != out.data_dim_ || out.boundary_chol_.dim() != out.delta_dim_ ||
      out.schur_chol_.dim() != out.delta_dim_ || out.cross_.size() != out.whitened_.size()) {
    throw_error(ErrorKind::Input, "factored covariance: inconsistent stored parts");
  }
  return out;
}

Eigen::VectorXd FactoredAugmented::apply_cross(const Eigen::VectorXd& delta_vec) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(data_dim_);
  for (const auto& blk : cross_) {
    out.segment(data_chol_.offset(blk.region), blk.values.rows()).noalias() +=
        blk.values * delta_vec.segment(entry_offsets_[static_cast<std::size_t>(blk.entry)],
                                       blk.values.cols());
  }
  return out;
}

Eigen::VectorXd FactoredAugmented::apply_cross_transpose(const Eigen::VectorXd& data_vec) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(delta_dim_);
  for (const auto& blk : cross_) {
    out.segment(entry_offsets_[static_cast<std::size_t>(blk.entry)], blk.values.cols()).noalias() +=
        blk.values.transpose() *
        data_vec.segment(data_chol_.offset(blk.region), blk.values.rows());
  }
  return out;
}

Eigen::VectorXd FactoredAugmented::apply_whitened(const Eigen::VectorXd& delta_vec) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(data_dim_);
  for (const auto& blk : whitened_) {
    out.segment(data_chol_.offset(blk.region), blk.values.rows()).noalias() +=
        blk.values * delta_vec.segment(entry_offsets_[static_cast<std::size_t>(blk.entry)],
                                       blk.values.cols());
  }
  return out;
}

Eigen::VectorXd FactoredAugmented::apply_q(const Eigen::VectorXd& data_vec) const {
  Eigen::VectorXd u = data_chol_.solve(data_vec);
  if (delta_dim_ == 0) return u;
  return u + apply_whitened(schur_chol_.solve(apply_cross_transpose(u)));
}

int default_region_count(std::int64_t n) {
  int k = 1;
  while (n > 600LL * k) k *= 2;
  return k;
}

PatchworkModel PatchworkModel::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   int k_requested, int b_per_boundary, const HyperParams& params,
                                   std::uint64_t seed, const FitOptions& options) {
  if (x.rows() != y.size()) {
    throw_error(ErrorKind::Input, "fit: inputs and responses disagree in length");
  }
  if (x.rows() < 1) throw_error(ErrorKind::Input, "fit: empty training set");
  if (!y.allFinite() || !x.allFinite()) {
    throw_error(ErrorKind::Input, "fit: training data contains non-finite values");
  }
  if (b_per_boundary < 0) throw_error(ErrorKind::Config, "fit: pseudo count must be >= 0");
  if (k_requested < 0) throw_error(ErrorKind::Config, "fit: region count must be >= 1 (0 = auto)");

  const auto t_start = std::chrono::steady_clock::now();
  PatchworkModel model;
  model.requested_k_ = (k_requested == 0) ? default_region_count(y.size()) : k_requested;
  model.requested_b_ = b_per_boundary;
  model.seed_ = seed;
  model.train_size_ = y.size();

  {
    int leaves = 1;
    while (2 * leaves <= model.requested_k_) leaves *= 2;
    if (y.size() < static_cast<Eigen::Index>(leaves) * kMinLeafSize) {
      throw_error(ErrorKind::Config,
                  "fit: " + std::to_string(leaves) + " regions need at least " +
                      std::to_string(leaves * kMinLeafSize) + " points, got " +
                      std::to_string(y.size()));
    }
  }

  auto t0 = std::chrono::steady_clock::now();
  model.tree_ = SpatialTree::build(x, model.requested_k_, seed);
  model.boundaries_ = place_pseudo_points(model.tree_, b_per_boundary, derive_seed(seed, 0xb0ull));
  model.timings_.partition_seconds = seconds_since(t0);

  model.params_ = params;
  model.params_.validate(model.tree_.leaf_count());
  if (options.optimize) {
    OptimizeResult result = optimize_hyperparams(params, model.tree_, model.boundaries_, x, y,
                                                 options.budget, derive_seed(seed, 0x0eull));
    model.params_ = result.best;
    model.trace_ = std::move(result.trace);
  }

  model.mean_offset_ = y.mean();
  const Eigen::VectorXd y_centered = y.array() - model.mean_offset_;
  model.delta_jitter_ = boundary_jitter(model.params_);

  t0 = std::chrono::steady_clock::now();
  model.regions_ = make_regions(model.tree_, x, y_centered, model.params_);
  AugmentedCov cov = assemble(model.regions_, model.boundaries_, model.delta_jitter_);
  model.timings_.assembly_seconds = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  // extreme kernels can leave the boundary covariance or its Schur
  // complement indefinite at the base jitter; escalate before giving up
  for (int attempt = 0;; ++attempt) {
    try {
      model.factors_ = FactoredAugmented(cov, model.boundaries_);
      break;
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::Numeric || attempt >= 2) throw;
      cov.delta_jitter *= 1e4;
      model.delta_jitter_ = cov.delta_jitter;
    }
  }

  Eigen::VectorXd y_by_region(model.factors_.data_dim());
  for (const auto& reg : model.regions_) {
    y_by_region.segment(model.factors_.region_offset(reg.region_id), reg.targets.size()) =
        reg.targets;
  }
  model.weighted_targets_ = model.factors_.apply_q(y_by_region);
  if (model.factors_.delta_dim() > 0) {
    model.boundary_weights_ = model.factors_.boundary_chol().solve(
        model.factors_.apply_cross_transpose(model.weighted_targets_));
  } else {
    model.boundary_weights_.resize(0);
  }
  model.timings_.factorization_seconds = seconds_since(t0);
  model.timings_.total_seconds = seconds_since(t_start);
  model.fitted_ = true;
  return model;
}

Prediction PatchworkModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x_star) const {
  if (!fitted_) throw_error(ErrorKind::State, "predict: model is not fitted");
  return predict_in_region(x_star, tree_.route(x_star));
}

Prediction PatchworkModel::predict_in_region(const Eigen::Ref<const Eigen::VectorXd>& x_star,
                                             int region) const {
  if (!fitted_) throw_error(ErrorKind::State, "predict: model is not fitted");
  if (region < 0 || region >= region_count()) {
    throw_error(ErrorKind::Input, "predict: region index out of range");
  }
  const RegionData& reg = regions_[static_cast<std::size_t>(region)];
  const Eigen::MatrixXd x_row = x_star.transpose();

  const Eigen::VectorXd c_data = cross_cov(reg.kernel, reg.inputs, x_row).col(0);
  const int region_off = factors_.region_offset(region);

  double mean = mean_offset_ +
                c_data.dot(weighted_targets_.segment(region_off, c_data.size()));

  const int n_delta = factors_.delta_dim();
  Eigen::VectorXd c_delta;
  bool has_delta = false;
  if (n_delta > 0) {
    c_delta = Eigen::VectorXd::Zero(n_delta);
    for (int e : boundaries_.entries_touching(region)) {
      const BoundaryEntry& entry = boundaries_.entry(e);
      const double sign = entry.k == region ? 1.0 : -1.0;
      const Eigen::VectorXd vals =
          sign * cross_cov(reg.kernel, entry.points, x_row).col(0);
      c_delta.segment(boundaries_.offset(e), vals.size()) = vals;
      mean -= vals.dot(boundary_weights_.segment(boundaries_.offset(e), vals.size()));
      has_delta = true;
    }
  }

  // variance via one solve against (C_DD - C_Dd C_dd^-1 C_Dd^T): the
  // right-hand side is region-local except for the boundary correction,
  // whose whitened form C_DD^-1 C_Dd is already stored, so no full block
  // solve is needed per point
  double quad = 0.0;
  Eigen::VectorXd t = Eigen::VectorXd::Zero(factors_.data_dim());
  t.segment(region_off, c_data.size()) = c_data;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(factors_.data_dim());
  u.segment(region_off, c_data.size()) =
      factors_.data_chol().solve_block(region, c_data).col(0);
  if (has_delta) {
    const Eigen::VectorXd half = factors_.boundary_chol().half_solve(c_delta);
    quad = half.squaredNorm();
    const Eigen::VectorXd z = factors_.boundary_chol().finish_solve(half);
    t -= factors_.apply_cross(z);
    u -= factors_.apply_whitened(z);
  }
  Eigen::VectorXd qt = u;
  if (factors_.delta_dim() > 0) {
    qt += factors_.apply_whitened(
        factors_.schur_chol().solve(factors_.apply_cross_transpose(u)));
  }

  const double prior_var = kernel_eval(reg.kernel, x_star, x_star);
  double variance = prior_var - quad - t.dot(qt);
  if (variance < 0.0) {
    if (variance < -1e-8) {
      throw_error(ErrorKind::Numeric, "predict: negative predictive variance " +
                                          std::to_string(variance));
    }
    variance = 0.0;
  }
  return {mean, variance, region};
}

BoundaryPrediction PatchworkModel::predict_on_boundary(
    const Eigen::Ref<const Eigen::VectorXd>& x_star) const {
  if (!fitted_) throw_error(ErrorKind::State, "predict: model is not fitted");
  const int node = tree_.find_owning_node(x_star);
  if (node < 0) {
    throw_error(ErrorKind::Input, "predict_on_boundary: point is not on a recorded boundary");
  }
  const int left = tree_.route_forced(node, x_star, true);
  const int right = tree_.route_forced(node, x_star, false);
  BoundaryPrediction out;
  out.owning_node = node;
  out.side_k = predict_in_region(x_star, std::min(left, right));
  out.side_l = predict_in_region(x_star, std::max(left, right));
  out.chosen = out.side_k;
  return out;
}

Eigen::MatrixXd PatchworkModel::train_inputs() const {
  Eigen::MatrixXd x(train_size_, dim());
  for (const auto& reg : regions_) {
    for (std::size_t i = 0; i < reg.rows.size(); ++i) {
      x.row(reg.rows[i]) = reg.inputs.row(static_cast<Eigen::Index>(i));
    }
  }
  return x;
}

Eigen::VectorXd PatchworkModel::train_targets() const {
  Eigen::VectorXd y(train_size_);
  for (const auto& reg : regions_) {
    for (std::size_t i = 0; i < reg.rows.size(); ++i) {
      y[reg.rows[i]] = reg.targets[static_cast<Eigen::Index>(i)] + mean_offset_;
    }
  }
  return y;
}

}  // namespace patchwork
