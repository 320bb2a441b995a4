#include "patchwork/reference.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace patchwork {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& a, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw_error(ErrorKind::Numeric, std::string(what) + ": matrix is not positive definite");
  }
  return llt;
}

// Dense pieces of the augmented joint, in region-concatenated row order.
struct DenseJoint {
  std::vector<Eigen::MatrixXd> region_inputs;
  std::vector<int> region_offsets;
  Eigen::VectorXd y_by_region;  // centered
  double mean_offset = 0.0;
  Eigen::MatrixXd data_cov;      // N x N, block diagonal with noise
  Eigen::MatrixXd cross_cov_dd;  // N x n_delta
  Eigen::MatrixXd boundary_cov;  // n_delta x n_delta, jitter applied
  int n = 0;
  int n_delta = 0;
};

// Built directly from the definition of the boundary-difference process:
// every covariance is expanded through
//   cov(f_k - f_l, f_u - f_v) = [k=u]c_k - [k=v]c_k - [l=u]c_l + [l=v]c_l
// rather than through any precomputed sign table.
DenseJoint build_dense_joint(const SpatialTree& tree, const BoundarySet& bset,
                             const HyperParams& params, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& y, std::optional<double> jitter) {
  if (x.rows() != y.size()) {
    throw_error(ErrorKind::Input, "dense joint: inputs and responses disagree in length");
  }
  if (x.rows() + bset.total_points() > kDenseAugmentedGuardrail) {
    throw_error(ErrorKind::Size, "dense joint: guardrail of " +
                                     std::to_string(kDenseAugmentedGuardrail) +
                                     " total dimensions exceeded");
  }
  params.validate(tree.leaf_count());

  DenseJoint joint;
  joint.n = static_cast<int>(x.rows());
  joint.n_delta = bset.total_points();
  joint.mean_offset = joint.n > 0 ? y.mean() : 0.0;

  const int regions = tree.leaf_count();
  std::vector<std::vector<int>> rows_of(static_cast<std::size_t>(regions));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    rows_of[static_cast<std::size_t>(tree.route(x.row(r).transpose()))].push_back(
        static_cast<int>(r));
  }

  joint.region_inputs.resize(static_cast<std::size_t>(regions));
  joint.region_offsets.resize(static_cast<std::size_t>(regions));
  joint.y_by_region.resize(joint.n);
  int offset = 0;
  for (int k = 0; k < regions; ++k) {
    const auto& rows = rows_of[static_cast<std::size_t>(k)];
    joint.region_offsets[static_cast<std::size_t>(k)] = offset;
    auto& xk = joint.region_inputs[static_cast<std::size_t>(k)];
    xk.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xk.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
      joint.y_by_region[offset + static_cast<int>(i)] = y[rows[i]] - joint.mean_offset;
    }
    offset += static_cast<int>(rows.size());
  }

  joint.data_cov = Eigen::MatrixXd::Zero(joint.n, joint.n);
  for (int k = 0; k < regions; ++k) {
    const auto& xk = joint.region_inputs[static_cast<std::size_t>(k)];
    if (xk.rows() == 0) continue;
    const int off = joint.region_offsets[static_cast<std::size_t>(k)];
    Eigen::MatrixXd block = cross_cov(params.for_region(k), xk, xk);
    block.diagonal().array() += params.for_region(k).noise_var;
    joint.data_cov.block(off, off, xk.rows(), xk.rows()) = block;
  }

  joint.cross_cov_dd = Eigen::MatrixXd::Zero(joint.n, joint.n_delta);
  joint.boundary_cov = Eigen::MatrixXd::Zero(joint.n_delta, joint.n_delta);
  for (int e = 0; e < bset.entry_count(); ++e) {
    const BoundaryEntry& pe = bset.entry(e);
    const int off_e = bset.offset(e);
    const Eigen::Index b_e = pe.points.rows();
    for (int m = 0; m < regions; ++m) {
      const auto& xm = joint.region_inputs[static_cast<std::size_t>(m)];
      if (xm.rows() == 0) continue;
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(xm.rows(), b_e);
      if (m == pe.k) block += cross_cov(params.for_region(m), xm, pe.points);
      if (m == pe.l) block -= cross_cov(params.for_region(m), xm, pe.points);
      joint.cross_cov_dd.block(joint.region_offsets[static_cast<std::size_t>(m)], off_e,
                               xm.rows(), b_e) = block;
    }
    for (int f = 0; f < bset.entry_count(); ++f) {
      const BoundaryEntry& pf = bset.entry(f);
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(b_e, pf.points.rows());
      if (pe.k == pf.k) block += cross_cov(params.for_region(pe.k), pe.points, pf.points);
      if (pe.k == pf.l) block -= cross_cov(params.for_region(pe.k), pe.points, pf.points);
      if (pe.l == pf.k) block -= cross_cov(params.for_region(pe.l), pe.points, pf.points);
      if (pe.l == pf.l) block += cross_cov(params.for_region(pe.l), pe.points, pf.points);
      joint.boundary_cov.block(off_e, bset.offset(f), b_e, pf.points.rows()) = block;
    }
  }
  joint.boundary_cov.diagonal().array() += jitter.value_or(boundary_jitter(params));
  return joint;
}

// cov(f_region(x_star), y) and cov(f_region(x_star), delta)
void star_covariances(const DenseJoint& joint, const BoundarySet& bset, const HyperParams& params,
                      const Eigen::Ref<const Eigen::VectorXd>& x_star, int region,
                      Eigen::VectorXd& c_data, Eigen::VectorXd& c_delta) {
  const KernelSpec& kernel = params.for_region(region);
  const Eigen::MatrixXd x_row = x_star.transpose();

  c_data = Eigen::VectorXd::Zero(joint.n);
  const auto& xr = joint.region_inputs[static_cast<std::size_t>(region)];
  if (xr.rows() > 0) {
    c_data.segment(joint.region_offsets[static_cast<std::size_t>(region)], xr.rows()) =
        cross_cov(kernel, xr, x_row).col(0);
  }

  c_delta = Eigen::VectorXd::Zero(joint.n_delta);
  for (int e = 0; e < bset.entry_count(); ++e) {
    const BoundaryEntry& pe = bset.entry(e);
    Eigen::VectorXd block = Eigen::VectorXd::Zero(pe.points.rows());
    if (pe.k == region) block += cross_cov(kernel, pe.points, x_row).col(0);
    if (pe.l == region) block -= cross_cov(kernel, pe.points, x_row).col(0);
    c_delta.segment(bset.offset(e), pe.points.rows()) = block;
  }
}

}  // namespace

Eigen::MatrixX2d exact_gp_predict_batch(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, const Eigen::MatrixXd& x_star,
                                        std::optional<double> offset) {
  spec.validate();
  if (x.rows() != y.size()) {
    throw_error(ErrorKind::Input, "exact gp: inputs and responses disagree in length");
  }
  if (x.rows() > kExactGpGuardrail) {
    throw_error(ErrorKind::Size, "exact gp: guardrail of " + std::to_string(kExactGpGuardrail) +
                                     " points exceeded");
  }
  Eigen::MatrixX2d out(x_star.rows(), 2);
  if (x.rows() == 0) {
    out.col(0).setConstant(offset.value_or(0.0));
    out.col(1).setConstant(spec.tau);
    return out;
  }
  if (x.cols() != x_star.cols()) {
    throw_error(ErrorKind::Input, "exact gp: test point dimension mismatch");
  }

  const double mu = offset.value_or(y.mean());
  Eigen::MatrixXd c = cross_cov(spec, x, x);
  c.diagonal().array() += spec.noise_var;
  const auto llt = checked_llt(c, "exact gp");
  const Eigen::VectorXd alpha = llt.solve(Eigen::VectorXd(y.array() - mu));

  for (Eigen::Index i = 0; i < x_star.rows(); ++i) {
    const Eigen::VectorXd c_star = cross_cov(spec, x, x_star.row(i)).col(0);
    out(i, 0) = mu + c_star.dot(alpha);
    double variance = kernel_eval(spec, x_star.row(i).transpose(), x_star.row(i).transpose()) -
                      c_star.dot(llt.solve(c_star));
    if (variance < 0.0 && variance > -1e-8) variance = 0.0;
    out(i, 1) = variance;
  }
  return out;
}

GpPrediction exact_gp_predict(const KernelSpec& spec, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y,
                              const Eigen::Ref<const Eigen::VectorXd>& x_star,
                              std::optional<double> offset) {
  const Eigen::MatrixX2d out = exact_gp_predict_batch(spec, x, y, x_star.transpose(), offset);
  return {out(0, 0), out(0, 1)};
}

GpPrediction dense_augmented_predict(const SpatialTree& tree, const BoundarySet& bset,
                                     const HyperParams& params, const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& y,
                                     const Eigen::Ref<const Eigen::VectorXd>& x_star, int region,
                                     std::optional<double> jitter) {
  const DenseJoint joint = build_dense_joint(tree, bset, params, x, y, jitter);
  if (region < 0) region = tree.route(x_star);

  Eigen::VectorXd c_data, c_delta;
  star_covariances(joint, bset, params, x_star, region, c_data, c_delta);

  const int total = joint.n + joint.n_delta;
  Eigen::MatrixXd sigma(total, total);
  sigma.topLeftCorner(joint.n, joint.n) = joint.data_cov;
  sigma.topRightCorner(joint.n, joint.n_delta) = joint.cross_cov_dd;
  sigma.bottomLeftCorner(joint.n_delta, joint.n) = joint.cross_cov_dd.transpose();
  sigma.bottomRightCorner(joint.n_delta, joint.n_delta) = joint.boundary_cov;

  Eigen::VectorXd z(total);
  z.head(joint.n) = c_data;
  z.tail(joint.n_delta) = c_delta;
  Eigen::VectorXd observed = Eigen::VectorXd::Zero(total);
  observed.head(joint.n) = joint.y_by_region;

  const auto llt = checked_llt(sigma, "dense augmented");
  const double mean = joint.mean_offset + z.dot(llt.solve(observed));
  const double prior_var = kernel_eval(params.for_region(region), x_star, x_star);
  double variance = prior_var - z.dot(llt.solve(z));
  if (variance < 0.0 && variance > -1e-8) variance = 0.0;
  return {mean, variance};
}

GpPrediction dense_augmented_predict_sequential(const SpatialTree& tree, const BoundarySet& bset,
                                                const HyperParams& params,
                                                const Eigen::MatrixXd& x,
                                                const Eigen::VectorXd& y,
                                                const Eigen::Ref<const Eigen::VectorXd>& x_star,
                                                int region, std::optional<double> jitter) {
  const DenseJoint joint = build_dense_joint(tree, bset, params, x, y, jitter);
  if (region < 0) region = tree.route(x_star);

  Eigen::VectorXd c_data, c_delta;
  star_covariances(joint, bset, params, x_star, region, c_data, c_delta);

  const auto llt = checked_llt(joint.data_cov, "dense augmented (sequential)");
  const double prior_var = kernel_eval(params.for_region(region), x_star, x_star);

  // posterior of (f_star, delta) given y
  const double m_f = c_data.dot(llt.solve(joint.y_by_region));
  const double v_ff = prior_var - c_data.dot(llt.solve(c_data));
  if (joint.n_delta == 0) {
    double variance = v_ff;
    if (variance < 0.0 && variance > -1e-8) variance = 0.0;
    return {joint.mean_offset + m_f, variance};
  }
  const Eigen::VectorXd m_delta = joint.cross_cov_dd.transpose() * llt.solve(joint.y_by_region);
  const Eigen::MatrixXd solved_cross = llt.solve(joint.cross_cov_dd);
  const Eigen::VectorXd v_fd = c_delta - solved_cross.transpose() * c_data;
  const Eigen::MatrixXd v_dd = joint.boundary_cov - joint.cross_cov_dd.transpose() * solved_cross;

  // condition on delta = 0
  const auto llt_dd = checked_llt(v_dd, "dense augmented (sequential)");
  const double mean = joint.mean_offset + m_f + v_fd.dot(llt_dd.solve(-m_delta));
  double variance = v_ff - v_fd.dot(llt_dd.solve(v_fd));
  if (variance < 0.0 && variance > -1e-8) variance = 0.0;
  return {mean, variance};
}

double dense_nl(const HyperParams& params, const SpatialTree& tree, const BoundarySet& bset,
                const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                std::optional<double> jitter) {
  const DenseJoint joint = build_dense_joint(tree, bset, params, x, y, jitter);
  const int total = joint.n + joint.n_delta;
  Eigen::MatrixXd sigma(total, total);
  sigma.topLeftCorner(joint.n, joint.n) = joint.data_cov;
  sigma.topRightCorner(joint.n, joint.n_delta) = joint.cross_cov_dd;
  sigma.bottomLeftCorner(joint.n_delta, joint.n) = joint.cross_cov_dd.transpose();
  sigma.bottomRightCorner(joint.n_delta, joint.n_delta) = joint.boundary_cov;

  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();

  Eigen::VectorXd observed = Eigen::VectorXd::Zero(total);
  observed.head(joint.n) = joint.y_by_region;

  const Eigen::MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const double quadratic = observed.dot(llt.solve(observed));
  const double value = 0.5 * (total * kLog2Pi + logdet + quadratic);
  return std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
}

}  // namespace patchwork
