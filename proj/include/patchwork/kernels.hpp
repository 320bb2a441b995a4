#pragma once

#include <Eigen/Dense>
#include <vector>

#include "patchwork/common.hpp"

namespace patchwork {

// Stationary covariance families. Points are rows of Eigen matrices.
//
//   SquaredExponential: tau * exp(-|x1 - x2|^2 / (2 rho^2))
//   Exponential:        tau * exp(-|x1 - x2| / rho)
//
// tau is the signal variance, rho the length scale, and noise_var the
// observation noise added to the diagonal of data covariance blocks.
enum class KernelFamily { SquaredExponential, Exponential };

struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  double tau = 1.0;
  double rho = 1.0;
  double noise_var = 0.0;

  void validate() const;
};

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2);

// Entry (i, j) is kernel_eval(spec, X1.row(i), X2.row(j)).
Eigen::MatrixXd cross_cov(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& x1,
                          const Eigen::Ref<const Eigen::MatrixXd>& x2);

// One covariance per region, or a single spec shared by all regions.
class HyperParams {
 public:
  HyperParams() = default;
  explicit HyperParams(KernelSpec shared) : specs_{shared} {}
  explicit HyperParams(std::vector<KernelSpec> per_region);

  bool shared() const { return specs_.size() == 1; }
  std::size_t size() const { return specs_.size(); }
  const KernelSpec& for_region(int region) const;
  const std::vector<KernelSpec>& specs() const { return specs_; }

  // Length must be 1 or exactly the region count.
  void validate(int region_count) const;

 private:
  std::vector<KernelSpec> specs_;
};

// Diagonal inflation for boundary-difference covariance matrices, which
// carry no noise term of their own: 1e-8 times the mean signal variance.
double boundary_jitter(const HyperParams& params);

}  // namespace patchwork
