#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "patchwork/common.hpp"

namespace patchwork {

// (1/T) sum (truth_t - pred_t)^2
double mse(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred);

// (1/T) sum [ (truth_t - mean_t)^2 / (2 var_t) + 1/2 log(2 pi var_t) ]
double nlpd(const Eigen::VectorXd& truth, const Eigen::VectorXd& means,
            const Eigen::VectorXd& variances);

struct BoundaryMetricValues {
  double b_mse = 0.0;      // lower-id side against the benchmark mean
  double msm = 0.0;        // squared mismatch between the two sides' means
  double b_mse_var = 0.0;  // variance analogue of b_mse
  double msm_var = 0.0;    // variance analogue of msm
};

// side_lo is the prediction of the lower-id region of each straddling
// pair; side_hi the other side.
BoundaryMetricValues boundary_metrics(const Eigen::VectorXd& benchmark_means,
                                      const Eigen::VectorXd& benchmark_vars,
                                      const Eigen::VectorXd& side_lo_means,
                                      const Eigen::VectorXd& side_lo_vars,
                                      const Eigen::VectorXd& side_hi_means,
                                      const Eigen::VectorXd& side_hi_vars);

// Boundary and benchmark fields stay empty (not zero) when the model has
// no boundaries or no benchmark was available.
struct MetricReport {
  std::optional<double> mse;
  std::optional<double> nlpd;
  std::optional<double> i_mse;
  std::optional<double> b_mse;
  std::optional<double> msm;
  std::optional<double> i_mse_var;
  std::optional<double> b_mse_var;
  std::optional<double> msm_var;
  std::int64_t t = 0;    // held-out test points
  std::int64_t t_i = 0;  // interior benchmark points
  std::int64_t t_b = 0;  // boundary benchmark points
};

}  // namespace patchwork
