#include "patchwork/metrics.hpp"

#include <cmath>
#include <string>

namespace patchwork {

double mse(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
  if (truth.size() != pred.size()) {
    throw_error(ErrorKind::Input, "mse: vectors disagree in length");
  }
  if (truth.size() == 0) throw_error(ErrorKind::Input, "mse: empty input");
  return (truth - pred).squaredNorm() / static_cast<double>(truth.size());
}

double nlpd(const Eigen::VectorXd& truth, const Eigen::VectorXd& means,
            const Eigen::VectorXd& variances) {
  if (truth.size() != means.size() || truth.size() != variances.size()) {
    throw_error(ErrorKind::Input, "nlpd: vectors disagree in length");
  }
  if (truth.size() == 0) throw_error(ErrorKind::Input, "nlpd: empty input");
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (!(variances[i] > 0.0)) {
      throw_error(ErrorKind::Input,
                  "nlpd: non-positive variance at index " + std::to_string(i));
    }
    const double r = truth[i] - means[i];
    sum += r * r / (2.0 * variances[i]) + 0.5 * std::log(kTwoPi * variances[i]);
  }
  return sum / static_cast<double>(truth.size());
}

BoundaryMetricValues boundary_metrics(const Eigen::VectorXd& benchmark_means,
                                      const Eigen::VectorXd& benchmark_vars,
                                      const Eigen::VectorXd& side_lo_means,
                                      const Eigen::VectorXd& side_lo_vars,
                                      const Eigen::VectorXd& side_hi_means,
                                      const Eigen::VectorXd& side_hi_vars) {
  const Eigen::Index t = benchmark_means.size();
  if (benchmark_vars.size() != t || side_lo_means.size() != t || side_lo_vars.size() != t ||
      side_hi_means.size() != t || side_hi_vars.size() != t) {
    throw_error(ErrorKind::Input, "boundary metrics: vectors disagree in length");
  }
  BoundaryMetricValues out;
  out.b_mse = mse(benchmark_means, side_lo_means);
  out.msm = (side_lo_means - side_hi_means).squaredNorm() / static_cast<double>(t);
  out.b_mse_var = mse(benchmark_vars, side_lo_vars);
  out.msm_var = (side_lo_vars - side_hi_vars).squaredNorm() / static_cast<double>(t);
  return out;
}

}  // namespace patchwork
