#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "patchwork/kernels.hpp"
#include "patchwork/model.hpp"
#include "patchwork/partition.hpp"

namespace patchwork {

// Negative log marginal likelihood of the augmented observation vector
// (y, delta = 0), split into its determinant and quadratic parts:
//
//   value = (N + n_delta)/2 log(2 pi)
//         + 1/2 (logdet_data + logdet_schur)
//         + 1/2 quadratic
//
// Indefinite covariances at extreme parameters yield value = +inf rather
// than an exception, so optimizers can step through bad regions.
struct NLState {
  HyperParams theta;
  double value = 0.0;
  double logdet_data = 0.0;
  double logdet_schur = 0.0;
  double quadratic = 0.0;

  bool finite() const { return std::isfinite(value); }
};

NLState neg_log_marginal(const HyperParams& theta, const SpatialTree& tree,
                         const BoundarySet& bset, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& y);

struct OptimizeResult {
  HyperParams best;
  double best_value = 0.0;
  int evaluations = 0;
  std::vector<TraceRow> trace;
};

// Nelder-Mead search over (log tau, log rho, log noise_var) with a shared
// kernel: one run from the given start plus three runs from perturbed
// starts, all drawing from one evaluation budget. The partition and the
// pseudo-observation sites stay fixed across evaluations.
OptimizeResult optimize_hyperparams(const HyperParams& init, const SpatialTree& tree,
                                    const BoundarySet& bset, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y, int budget,
                                    std::uint64_t seed = 0x6e6dull);

}  // namespace patchwork
