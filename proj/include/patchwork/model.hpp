#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "patchwork/kernels.hpp"
#include "patchwork/partition.hpp"
#include "patchwork/sparse.hpp"

namespace patchwork {

struct RegionData {
  int region_id = -1;
  Eigen::MatrixXd inputs;   // M_k x d
  Eigen::VectorXd targets;  // centered responses, length M_k
  std::vector<int> rows;    // original row indices
  KernelSpec kernel;
};

// Split rows by leaf membership; targets are already centered by the caller.
std::vector<RegionData> make_regions(const SpatialTree& tree, const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& y_centered,
                                     const HyperParams& params);

// One structurally nonzero block of the data/boundary cross covariance:
// rows of region `region` against the sites of boundary entry `entry`,
// sign already applied (+ when the region is the first of the pair).
// assemble() emits exactly two blocks per entry, first-of-pair first, so
// block 2*e belongs to entry(e).k and block 2*e + 1 to entry(e).l.
struct CrossBlock {
  int region = -1;
  int entry = -1;
  Eigen::MatrixXd values;  // M_region x B_entry
};

// Covariance blocks of the augmented vector (y, delta):
//   data_cov      block k = c_k(X_k, X_k) + noise_var_k * I
//   cross         nonzero blocks of cov(y, delta)
//   boundary_cov  cov(delta, delta), no jitter applied
// delta_jitter is the diagonal inflation used whenever boundary_cov or its
// Schur complement is factorized.
struct AugmentedCov {
  BlockDiag data_cov;
  std::vector<CrossBlock> cross;
  SymSparse boundary_cov;
  double delta_jitter = 0.0;
};

AugmentedCov assemble(const std::vector<RegionData>& regions, const BoundarySet& bset,
                      double delta_jitter);
AugmentedCov assemble(const SpatialTree& tree, const BoundarySet& bset, const HyperParams& params,
                      const Eigen::MatrixXd& x, const Eigen::VectorXd& y_centered);

// Factored form of the augmented covariance. The inverse of
// (C_DD - C_Dd C_dd^-1 C_Dd^T) is applied through eq-free solves:
// block solves with the C_DD factors plus a correction through the banded
// factor of the Schur complement S = C_dd - C_Dd^T C_DD^-1 C_Dd.
struct FactoredAugmentedParts {
  int data_dim = 0;
  int delta_dim = 0;
  std::vector<int> entry_offsets;
  BlockDiagCholesky data_chol;
  std::vector<CrossBlock> cross;
  std::vector<CrossBlock> whitened;
  SymSparse schur;
  SparseCholesky boundary_chol;
  SparseCholesky schur_chol;
};

class FactoredAugmented {
 public:
  FactoredAugmented() = default;
  FactoredAugmented(const AugmentedCov& cov, const BoundarySet& bset);
  static FactoredAugmented from_parts(FactoredAugmentedParts&& parts);

  int data_dim() const { return data_dim_; }
  int delta_dim() const { return delta_dim_; }
  int region_offset(int k) const { return data_chol_.offset(k); }
  int entry_offset(int e) const { return entry_offsets_[static_cast<std::size_t>(e)]; }
  const BlockDiagCholesky& data_chol() const { return data_chol_; }
  const SparseCholesky& boundary_chol() const { return boundary_chol_; }
  const SparseCholesky& schur_chol() const { return schur_chol_; }
  const SymSparse& schur() const { return schur_; }
  const std::vector<CrossBlock>& cross() const { return cross_; }
  const std::vector<CrossBlock>& whitened() const { return whitened_; }

  Eigen::VectorXd apply_cross(const Eigen::VectorXd& delta_vec) const;
  Eigen::VectorXd apply_cross_transpose(const Eigen::VectorXd& data_vec) const;
  Eigen::VectorXd apply_whitened(const Eigen::VectorXd& delta_vec) const;

  // Q v with Q = (C_DD - C_Dd C_dd^-1 C_Dd^T)^-1
  Eigen::VectorXd apply_q(const Eigen::VectorXd& data_vec) const;

 private:
  int data_dim_ = 0;
  int delta_dim_ = 0;
  std::vector<int> entry_offsets_;
  BlockDiagCholesky data_chol_;
  std::vector<CrossBlock> cross_;
  std::vector<CrossBlock> whitened_;  // C_DD^-1 C_Dd, same block layout
  SymSparse schur_;
  SparseCholesky boundary_chol_;
  SparseCholesky schur_chol_;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  int region = -1;
};

struct BoundaryPrediction {
  Prediction chosen;  // the side with the smaller region id
  Prediction side_k;  // lower-id region's model
  Prediction side_l;  // higher-id region's model
  int owning_node = -1;
};

struct FitTimings {
  double partition_seconds = 0.0;
  double assembly_seconds = 0.0;
  double factorization_seconds = 0.0;
  double total_seconds = 0.0;
};

struct TraceRow {
  int evaluation = 0;
  double log_tau = 0.0;
  double log_rho = 0.0;
  double log_noise = 0.0;
  double value = 0.0;
};

struct FitOptions {
  bool optimize = false;  // run a marginal-likelihood search before fitting
  int budget = 150;       // max likelihood evaluations when optimizing
};

// Local GP models stitched together by zero-valued pseudo-observations of
// the differences between neighboring models at shared boundaries.
class PatchworkModel {
 public:
  PatchworkModel() = default;

  // k_requested == 0 picks the smallest power of two with N/K <= 600.
  static PatchworkModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int k_requested,
                            int b_per_boundary, const HyperParams& params, std::uint64_t seed,
                            const FitOptions& options = {});

  Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x_star) const;
  Prediction predict_in_region(const Eigen::Ref<const Eigen::VectorXd>& x_star, int region) const;

  // x_star must lie on one of the partition hyperplanes.
  BoundaryPrediction predict_on_boundary(const Eigen::Ref<const Eigen::VectorXd>& x_star) const;

  const SpatialTree& tree() const { return tree_; }
  const BoundarySet& boundaries() const { return boundaries_; }
  const HyperParams& params() const { return params_; }
  const std::vector<RegionData>& regions() const { return regions_; }
  const FactoredAugmented& factors() const { return factors_; }
  double mean_offset() const { return mean_offset_; }
  double delta_jitter() const { return delta_jitter_; }
  int dim() const { return tree_.dim(); }
  int region_count() const { return tree_.leaf_count(); }
  int pseudo_count() const { return boundaries_.total_points(); }
  std::int64_t train_size() const { return train_size_; }
  int requested_regions() const { return requested_k_; }
  int pseudo_per_boundary() const { return requested_b_; }
  std::uint64_t seed() const { return seed_; }
  const FitTimings& timings() const { return timings_; }
  const std::vector<TraceRow>& optimizer_trace() const { return trace_; }
  const Eigen::VectorXd& weighted_targets() const { return weighted_targets_; }

  // Training data in original row order and original units.
  Eigen::MatrixXd train_inputs() const;
  Eigen::VectorXd train_targets() const;

  void save(const std::string& path) const;
  static PatchworkModel load(const std::string& path);

 private:
  friend struct ModelSerializer;

  bool fitted_ = false;
  SpatialTree tree_;
  BoundarySet boundaries_;
  HyperParams params_;
  std::vector<RegionData> regions_;
  double mean_offset_ = 0.0;
  double delta_jitter_ = 0.0;
  std::int64_t train_size_ = 0;
  int requested_k_ = 1;
  int requested_b_ = 0;
  std::uint64_t seed_ = 0;

  FactoredAugmented factors_;
  Eigen::VectorXd weighted_targets_;  // Q y_c, region-concatenated order
  Eigen::VectorXd boundary_weights_;  // C_dd^-1 C_Dd^T Q y_c

  FitTimings timings_;
  std::vector<TraceRow> trace_;
};

// Smallest power of two K with N/K <= 600, at least 1.
int default_region_count(std::int64_t n);

inline constexpr int kDefaultPseudoPerBoundary = 7;

}  // namespace patchwork
