#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "patchwork/kernels.hpp"
#include "patchwork/partition.hpp"

namespace patchwork {

// Synthetic GP dataset description: n points uniform over an axis-aligned
// box, responses jointly drawn from N(0, noise_var I + C).
struct SimSpec {
  std::int64_t n = 0;
  int dim = 1;
  KernelSpec kernel;
  Eigen::VectorXd box_lo;  // defaults to 0 per axis
  Eigen::VectorXd box_hi;  // defaults to 10 per axis
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd x;       // n x d
  Eigen::VectorXd y;       // noisy responses
  Eigen::VectorXd f_true;  // latent function values
};

// Latent draw at fixed locations through a dense Cholesky factor of the
// kernel matrix (plus 1e-10 tau jitter, escalated if needed).
Eigen::VectorXd sample_gp_at(const KernelSpec& kernel, const Eigen::MatrixXd& x,
                             std::uint64_t seed);

Dataset sample_gp_dataset(const SimSpec& spec);

inline constexpr std::int64_t kSimulateGuardrail = 20000;

struct BenchmarkTargets {
  Eigen::MatrixXd interior;  // uniform over the box, off every hyperplane
  Eigen::MatrixXd boundary;  // on partition hyperplanes, away from pseudo sites
  bool boundary_possible = true;  // false when the partition has no boundaries
};

// Test locations for benchmark scoring: interior points uniform over the
// box excluding the partition hyperplanes, and boundary points uniform
// over the recorded interfaces excluding pseudo-observation sites.
BenchmarkTargets benchmark_prediction_targets(const SpatialTree& tree, const BoundarySet& bset,
                                              const Eigen::VectorXd& box_lo,
                                              const Eigen::VectorXd& box_hi,
                                              std::int64_t n_interior, std::int64_t n_boundary,
                                              std::uint64_t seed);

}  // namespace patchwork
