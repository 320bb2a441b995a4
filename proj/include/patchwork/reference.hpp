#pragma once

#include <Eigen/Dense>
#include <optional>

#include "patchwork/kernels.hpp"
#include "patchwork/partition.hpp"

namespace patchwork {

// Slow, dense, deliberately naive computations used as oracles by the
// test suites. Size guardrails keep accidental O(N^3) blowups out of CI.

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Exact GP posterior at x_star from a single dense solve. Responses are
// centered by `offset` (sample mean when absent) and the offset is
// restored in the returned mean. With no data the prior (offset, tau) is
// returned.
GpPrediction exact_gp_predict(const KernelSpec& spec, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y,
                              const Eigen::Ref<const Eigen::VectorXd>& x_star,
                              std::optional<double> offset = std::nullopt);

// Batch form sharing one factorization across all test points; rows of
// the returned matrix are (mean, variance).
Eigen::MatrixX2d exact_gp_predict_batch(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, const Eigen::MatrixXd& x_star,
                                        std::optional<double> offset = std::nullopt);

// Posterior of the patchwork predictor computed from the fully dense
// joint covariance of (f_star, y, delta), conditioned on y and delta = 0
// in one dense solve. `region` overrides the routed region, for
// boundary-side checks.
GpPrediction dense_augmented_predict(const SpatialTree& tree, const BoundarySet& bset,
                                     const HyperParams& params, const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& y,
                                     const Eigen::Ref<const Eigen::VectorXd>& x_star,
                                     int region = -1,
                                     std::optional<double> jitter = std::nullopt);

// Same posterior through the reverse conditioning order: first
// (f_star, delta) | y, then f_star | delta = 0. Agreement between the two
// routes is the oracle's self-consistency check.
GpPrediction dense_augmented_predict_sequential(const SpatialTree& tree, const BoundarySet& bset,
                                                const HyperParams& params,
                                                const Eigen::MatrixXd& x,
                                                const Eigen::VectorXd& y,
                                                const Eigen::Ref<const Eigen::VectorXd>& x_star,
                                                int region = -1,
                                                std::optional<double> jitter = std::nullopt);

// Dense negative log density of the joint Gaussian at (y_centered, 0).
// Indefinite covariance yields +inf.
double dense_nl(const HyperParams& params, const SpatialTree& tree, const BoundarySet& bset,
                const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                std::optional<double> jitter = std::nullopt);

inline constexpr Eigen::Index kExactGpGuardrail = 5000;
inline constexpr Eigen::Index kDenseAugmentedGuardrail = 2000;

}  // namespace patchwork
