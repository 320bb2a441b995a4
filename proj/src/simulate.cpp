#include "patchwork/simulate.hpp"

#include <cmath>

namespace patchwork {

void SimSpec::validate() const {
  kernel.validate();
  if (n < 1) throw_error(ErrorKind::Input, "simulate: sample count must be >= 1");
  if (n > kSimulateGuardrail) {
    throw_error(ErrorKind::Size, "simulate: guardrail of " + std::to_string(kSimulateGuardrail) +
                                     " samples exceeded (dense sampling path)");
  }
  if (dim < 1) throw_error(ErrorKind::Input, "simulate: dimension must be >= 1");
  if (box_lo.size() != dim || box_hi.size() != dim) {
    throw_error(ErrorKind::Input, "simulate: box bounds must match the dimension");
  }
  for (int j = 0; j < dim; ++j) {
    if (!(box_lo[j] < box_hi[j])) {
      throw_error(ErrorKind::Input, "simulate: box lower bound must be below the upper bound");
    }
  }
}

Eigen::VectorXd sample_gp_at(const KernelSpec& kernel, const Eigen::MatrixXd& x,
                             std::uint64_t seed) {
  kernel.validate();
  const Eigen::Index n = x.rows();
  if (n == 0) return Eigen::VectorXd();
  if (n > kSimulateGuardrail) {
    throw_error(ErrorKind::Size, "sample_gp_at: guardrail of " +
                                     std::to_string(kSimulateGuardrail) + " samples exceeded");
  }

  Eigen::MatrixXd c = cross_cov(kernel, x, x);
  double jitter = 1e-10 * kernel.tau;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd work = c;
    work.diagonal().array() += jitter;
    llt.compute(work);
    if (llt.info() == Eigen::Success) break;
    if (attempt >= 3) {
      throw_error(ErrorKind::Numeric, "sample_gp_at: kernel matrix is numerically indefinite");
    }
    jitter *= 100.0;
  }

  Rng rng(seed);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return Eigen::MatrixXd(llt.matrixL()) * z;
}

Dataset sample_gp_dataset(const SimSpec& spec) {
  spec.validate();

  Dataset data;
  Rng rng(spec.seed);
  data.x.resize(spec.n, spec.dim);
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    for (int j = 0; j < spec.dim; ++j) data.x(i, j) = rng.uniform(spec.box_lo[j], spec.box_hi[j]);
  }

  data.f_true = sample_gp_at(spec.kernel, data.x, derive_seed(spec.seed, 0xf0ull));

  const double noise_sd = std::sqrt(spec.kernel.noise_var);
  Rng noise_rng(derive_seed(spec.seed, 0x7eull));
  data.y.resize(spec.n);
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    data.y[i] = data.f_true[i] + noise_sd * noise_rng.normal();
  }
  return data;
}

BenchmarkTargets benchmark_prediction_targets(const SpatialTree& tree, const BoundarySet& bset,
                                              const Eigen::VectorXd& box_lo,
                                              const Eigen::VectorXd& box_hi,
                                              std::int64_t n_interior, std::int64_t n_boundary,
                                              std::uint64_t seed) {
  if (box_lo.size() != tree.dim() || box_hi.size() != tree.dim()) {
    throw_error(ErrorKind::Input, "benchmark targets: box bounds must match the dimension");
  }
  if (n_interior < 0 || n_boundary < 0) {
    throw_error(ErrorKind::Input, "benchmark targets: counts must be >= 0");
  }
  const int d = tree.dim();
  BenchmarkTargets out;

  Rng rng(derive_seed(seed, 0x1ull));
  out.interior.resize(n_interior, d);
  for (std::int64_t i = 0; i < n_interior;) {
    Eigen::VectorXd p(d);
    for (int j = 0; j < d; ++j) p[j] = rng.uniform(box_lo[j], box_hi[j]);
    if (tree.find_owning_node(p) >= 0) continue;  // too close to a hyperplane
    out.interior.row(i++) = p.transpose();
  }

  const std::vector<int> internals = tree.internal_nodes();
  if (internals.empty()) {
    out.boundary_possible = false;
    out.boundary.resize(0, d);
    return out;
  }

  Rng brng(derive_seed(seed, 0x2ull));
  const TreeNode& root = tree.node(tree.root());
  const double exclusion = 1e-9 * std::max(1.0, (root.box_hi - root.box_lo).norm());
  std::vector<Eigen::VectorXd> accepted;
  const long attempt_limit = 10000L * std::max<std::int64_t>(1, n_boundary);
  long attempts = 0;
  while (static_cast<std::int64_t>(accepted.size()) < n_boundary && attempts < attempt_limit) {
    ++attempts;
    const int node_id = internals[static_cast<std::size_t>(brng.next_u64() % internals.size())];
    const TreeNode& node = tree.node(node_id);
    Eigen::VectorXd u(d);
    for (int j = 0; j < d; ++j) u[j] = brng.uniform(node.box_lo[j], node.box_hi[j]);
    Eigen::VectorXd p = u - (node.direction.dot(u) - node.threshold) * node.direction;
    bool inside = true;
    for (int j = 0; j < d && inside; ++j) inside = p[j] >= node.box_lo[j] && p[j] <= node.box_hi[j];
    if (!inside || !tree.cell_contains(node_id, p)) continue;
    bool near_pseudo = false;
    for (const auto& entry : bset.entries()) {
      for (Eigen::Index r = 0; r < entry.points.rows() && !near_pseudo; ++r) {
        near_pseudo = (entry.points.row(r).transpose() - p).norm() < exclusion;
      }
      if (near_pseudo) break;
    }
    if (near_pseudo) continue;
    accepted.push_back(std::move(p));
  }

  out.boundary.resize(static_cast<Eigen::Index>(accepted.size()), d);
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    out.boundary.row(static_cast<Eigen::Index>(i)) = accepted[i].transpose();
  }
  return out;
}

}  // namespace patchwork
