#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "patchwork/common.hpp"
#include "patchwork/kernels.hpp"

namespace testutil {

inline Eigen::MatrixXd uniform_points(Eigen::Index n, int d, double lo, double hi,
                                      std::uint64_t seed) {
  patchwork::Rng rng(seed);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = rng.uniform(lo, hi);
  }
  return x;
}

// smooth deterministic responses plus seeded noise; cheap stand-in for a
// GP draw where the exact distribution does not matter
inline Eigen::VectorXd smooth_targets(const Eigen::MatrixXd& x, double noise_sd,
                                      std::uint64_t seed) {
  patchwork::Rng rng(seed);
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double v = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      v += std::sin(0.9 * x(i, j) + 0.3 * static_cast<double>(j)) +
           0.1 * x(i, j) * std::cos(0.4 * x(i, (j + 1) % x.cols()));
    }
    y[i] = v + noise_sd * rng.normal();
  }
  return y;
}

// |a - b| <= tol * (1 + |b|)
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * (1.0 + std::abs(b));
}

inline patchwork::KernelSpec se_kernel(double tau, double rho, double noise) {
  patchwork::KernelSpec spec;
  spec.family = patchwork::KernelFamily::SquaredExponential;
  spec.tau = tau;
  spec.rho = rho;
  spec.noise_var = noise;
  return spec;
}

inline patchwork::KernelSpec exp_kernel(double tau, double rho, double noise) {
  patchwork::KernelSpec spec;
  spec.family = patchwork::KernelFamily::Exponential;
  spec.tau = tau;
  spec.rho = rho;
  spec.noise_var = noise;
  return spec;
}

}  // namespace testutil
