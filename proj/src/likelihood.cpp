#include "patchwork/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace patchwork {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

NLState neg_log_marginal(const HyperParams& theta, const SpatialTree& tree,
                         const BoundarySet& bset, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& y) {
  NLState state;
  state.theta = theta;
  theta.validate(tree.leaf_count());

  const double mu = y.mean();
  const Eigen::VectorXd y_centered = y.array() - mu;

  try {
    const std::vector<RegionData> regions = make_regions(tree, x, y_centered, theta);
    const AugmentedCov cov = assemble(regions, bset, boundary_jitter(theta));
    const FactoredAugmented factors(cov, bset);

    Eigen::VectorXd y_by_region(factors.data_dim());
    for (const auto& reg : regions) {
      y_by_region.segment(factors.region_offset(reg.region_id), reg.targets.size()) = reg.targets;
    }
    const Eigen::VectorXd g = factors.apply_q(y_by_region);

    state.logdet_data = factors.data_chol().logdet();
    state.logdet_schur = factors.schur_chol().logdet();
    state.quadratic = y_by_region.dot(g);
    const double n_total = static_cast<double>(factors.data_dim() + factors.delta_dim());
    state.value = 0.5 * (n_total * kLog2Pi + state.logdet_data + state.logdet_schur +
                         state.quadratic);
    if (!std::isfinite(state.value)) {
      state.value = std::numeric_limits<double>::infinity();
    }
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::Numeric) throw;
    state.value = std::numeric_limits<double>::infinity();
    state.logdet_data = state.logdet_schur = state.quadratic =
        std::numeric_limits<double>::quiet_NaN();
  }
  return state;
}

namespace {

using Point = Eigen::Vector3d;  // (log tau, log rho, log noise_var)

KernelSpec spec_from_log(const KernelSpec& base, const Point& p) {
  KernelSpec spec = base;
  spec.tau = std::exp(p[0]);
  spec.rho = std::exp(p[1]);
  spec.noise_var = std::exp(p[2]);
  return spec;
}

struct Evaluator {
  const KernelSpec& base;
  const SpatialTree& tree;
  const BoundarySet& bset;
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  int budget;
  int used = 0;
  std::vector<TraceRow>* trace;

  bool exhausted() const { return used >= budget; }

  double operator()(const Point& p) {
    const HyperParams theta(spec_from_log(base, p));
    const double value = neg_log_marginal(theta, tree, bset, x, y).value;
    ++used;
    trace->push_back({used, p[0], p[1], p[2], value});
    return value;
  }
};

struct Simplex {
  Point best_point;
  double best_value = std::numeric_limits<double>::infinity();
};

// One Nelder-Mead run; stops when the budget is spent or the simplex
// collapses. Standard reflection/expansion/contraction/shrink constants.
Simplex nelder_mead(Evaluator& eval, const Point& start, double step) {
  constexpr double kReflect = 1.0;
  constexpr double kExpand = 2.0;
  constexpr double kContract = 0.5;
  constexpr double kShrink = 0.5;
  constexpr int kDim = 3;

  struct Vertex {
    Point p;
    double value;
  };
  std::vector<Vertex> simplex;
  Simplex out;

  const auto record = [&out](const Point& p, double v) {
    if (v < out.best_value) {
      out.best_value = v;
      out.best_point = p;
    }
  };

  if (eval.exhausted()) return out;
  double v0 = eval(start);
  record(start, v0);
  simplex.push_back({start, v0});
  for (int i = 0; i < kDim; ++i) {
    if (eval.exhausted()) return out;
    Point p = start;
    p[i] += step;
    const double v = eval(p);
    record(p, v);
    simplex.push_back({p, v});
  }

  while (!eval.exhausted()) {
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.value < b.value; });
    const double spread = (simplex.back().p - simplex.front().p).norm();
    if (std::isfinite(simplex.front().value) && spread < 1e-10) break;

    Point centroid = Point::Zero();
    for (int i = 0; i < kDim; ++i) centroid += simplex[static_cast<std::size_t>(i)].p;
    centroid /= static_cast<double>(kDim);
    Vertex& worst = simplex.back();

    const Point reflected = centroid + kReflect * (centroid - worst.p);
    const double v_reflected = eval(reflected);
    record(reflected, v_reflected);

    if (v_reflected < simplex.front().value) {
      if (eval.exhausted()) break;
      const Point expanded = centroid + kExpand * (reflected - centroid);
      const double v_expanded = eval(expanded);
      record(expanded, v_expanded);
      worst = (v_expanded < v_reflected) ? Vertex{expanded, v_expanded}
                                         : Vertex{reflected, v_reflected};
      continue;
    }
    if (v_reflected < simplex[kDim - 1].value) {
      worst = {reflected, v_reflected};
      continue;
    }
    if (eval.exhausted()) break;
    const Point contracted = centroid + kContract * (worst.p - centroid);
    const double v_contracted = eval(contracted);
    record(contracted, v_contracted);
    if (v_contracted < worst.value) {
      worst = {contracted, v_contracted};
      continue;
    }
    for (int i = 1; i <= kDim; ++i) {
      if (eval.exhausted()) break;
      auto& vert = simplex[static_cast<std::size_t>(i)];
      vert.p = simplex.front().p + kShrink * (vert.p - simplex.front().p);
      vert.value = eval(vert.p);
      record(vert.p, vert.value);
    }
  }
  return out;
}

}  // namespace

OptimizeResult optimize_hyperparams(const HyperParams& init, const SpatialTree& tree,
                                    const BoundarySet& bset, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y, int budget, std::uint64_t seed) {
  if (budget < 20) throw_error(ErrorKind::Input, "optimize: budget must be at least 20");
  if (!init.shared()) {
    throw_error(ErrorKind::Input,
                "optimize: joint search needs a single shared kernel; per-region kernels are "
                "evaluation-only");
  }
  const KernelSpec& base = init.specs().front();
  base.validate();
  if (!(base.noise_var > 0.0)) {
    throw_error(ErrorKind::Input, "optimize: noise_var must be positive for log-space search");
  }

  OptimizeResult result;
  Evaluator eval{base, tree, bset, x, y, budget, 0, &result.trace};

  const Point start(std::log(base.tau), std::log(base.rho), std::log(base.noise_var));
  Point best_point = start;
  double best_value = std::numeric_limits<double>::infinity();

  Rng rng(seed);
  constexpr int kRuns = 4;  // the given start plus three perturbed restarts
  for (int run = 0; run < kRuns && !eval.exhausted(); ++run) {
    Point p = start;
    if (run > 0) {
      for (int i = 0; i < 3; ++i) p[i] += 0.5 * rng.normal();
    }
    const int remaining_runs = kRuns - run;
    const int run_budget = (budget - eval.used + remaining_runs - 1) / remaining_runs;
    Evaluator run_eval{base, tree, bset, x, y,
                       std::min(budget, eval.used + run_budget), eval.used, &result.trace};
    const Simplex s = nelder_mead(run_eval, p, 0.25);
    eval.used = run_eval.used;
    if (s.best_value < best_value) {
      best_value = s.best_value;
      best_point = s.best_point;
    }
  }

  result.evaluations = eval.used;
  result.best_value = best_value;
  if (!std::isfinite(best_value)) {
    throw_error(ErrorKind::Numeric,
                "optimize: every likelihood evaluation was infinite; try a smaller rho range");
  }
  result.best = HyperParams(spec_from_log(base, best_point));
  return result;
}

}  // namespace patchwork
