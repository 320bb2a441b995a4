#include "patchwork/kernels.hpp"

#include <cmath>

namespace patchwork {

void KernelSpec::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw_error(ErrorKind::Input, "kernel: tau must be positive and finite");
  }
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw_error(ErrorKind::Input, "kernel: rho must be positive and finite");
  }
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) {
    throw_error(ErrorKind::Input, "kernel: noise_var must be non-negative and finite");
  }
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2) {
  if (x1.size() != x2.size() || x1.size() < 1) {
    throw_error(ErrorKind::Input, "kernel_eval: points must share a dimension >= 1");
  }
  switch (spec.family) {
    case KernelFamily::SquaredExponential: {
      const double sq = (x1 - x2).squaredNorm();
      return spec.tau * std::exp(-sq / (2.0 * spec.rho * spec.rho));
    }
    case KernelFamily::Exponential: {
      const double r = (x1 - x2).norm();
      return spec.tau * std::exp(-r / spec.rho);
    }
  }
  throw_error(ErrorKind::Input, "kernel_eval: unknown family");
}

Eigen::MatrixXd cross_cov(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& x1,
                          const Eigen::Ref<const Eigen::MatrixXd>& x2) {
  if (x1.cols() != x2.cols() || x1.cols() < 1) {
    throw_error(ErrorKind::Input, "cross_cov: point sets must share a dimension >= 1");
  }
  Eigen::MatrixXd out(x1.rows(), x2.rows());
  const bool same =
      x1.rows() == x2.rows() && x1.data() == x2.data() && x1.outerStride() == x2.outerStride();
  for (Eigen::Index i = 0; i < x1.rows(); ++i) {
    const Eigen::Index j0 = same ? i : 0;
    for (Eigen::Index j = j0; j < x2.rows(); ++j) {
      out(i, j) = kernel_eval(spec, x1.row(i).transpose(), x2.row(j).transpose());
      if (same && j != i) out(j, i) = out(i, j);
    }
  }
  return out;
}

HyperParams::HyperParams(std::vector<KernelSpec> per_region) : specs_(std::move(per_region)) {
  if (specs_.empty()) {
    throw_error(ErrorKind::Input, "hyperparams: need at least one kernel spec");
  }
}

const KernelSpec& HyperParams::for_region(int region) const {
  if (specs_.empty()) throw_error(ErrorKind::State, "hyperparams: empty");
  if (specs_.size() == 1) return specs_.front();
  if (region < 0 || region >= static_cast<int>(specs_.size())) {
    throw_error(ErrorKind::Input, "hyperparams: region index out of range");
  }
  return specs_[static_cast<std::size_t>(region)];
}

void HyperParams::validate(int region_count) const {
  if (specs_.size() != 1 && specs_.size() != static_cast<std::size_t>(region_count)) {
    throw_error(ErrorKind::Config,
                "hyperparams: kernel list must have length 1 or match the region count (" +
                    std::to_string(region_count) + "), got " + std::to_string(specs_.size()));
  }
  for (const auto& s : specs_) s.validate();
}

// The boundary-difference covariance has no noise term, so its factor
// needs a floor against near-singular site geometry. The floor perturbs
// the exact equality of the two local models at the pseudo sites in
// proportion to its own magnitude, so it stays tiny; fitting escalates it
// when a factorization still fails.
double boundary_jitter(const HyperParams& params) {
  double sum = 0.0;
  for (const auto& s : params.specs()) sum += s.tau;
  return 1e-12 * sum / static_cast<double>(params.specs().size());
}

}  // namespace patchwork
