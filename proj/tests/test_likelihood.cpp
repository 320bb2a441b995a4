#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "patchwork/likelihood.hpp"
#include "patchwork/reference.hpp"
#include "patchwork/simulate.hpp"
#include "util.hpp"

using namespace patchwork;

namespace {

struct Instance {
  SpatialTree tree;
  BoundarySet bset;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Instance make_instance(int n, int d, int k, int b, std::uint64_t seed) {
  Instance inst;
  inst.x = testutil::uniform_points(n, d, 0, 10, seed);
  inst.y = testutil::smooth_targets(inst.x, 0.4, seed + 1);
  inst.tree = SpatialTree::build(inst.x, k, seed + 2);
  inst.bset = place_pseudo_points(inst.tree, b, seed + 3);
  return inst;
}

}  // namespace

TEST_CASE("scalar closed form") {
  Eigen::MatrixXd x(1, 1);
  x << 4.0;
  Eigen::VectorXd y(1);
  y << 0.0;
  const SpatialTree tree = SpatialTree::build(x, 1, 0);
  const HyperParams params(testutil::se_kernel(10.0, 1.0, 2.0));
  const NLState state = neg_log_marginal(params, tree, BoundarySet{}, x, y);
  const double expected =
      0.5 * std::log(2.0 * 3.14159265358979323846) + 0.5 * std::log(12.0);
  CHECK(state.value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(state.quadratic == doctest::Approx(0.0));
  CHECK(state.logdet_schur == 0.0);
}

TEST_CASE("sparse path equals the dense oracle") {
  for (const bool exponential : {false, true}) {
    for (const int k : {2, 4}) {
      for (const int b : {0, 2}) {
        const std::uint64_t seed = 300 + static_cast<std::uint64_t>(k + 10 * b) +
                                   (exponential ? 7 : 0);
        const Instance inst = make_instance(70, 2, k, b, seed);
        const HyperParams params(exponential ? testutil::exp_kernel(7.0, 1.5, 0.8)
                                             : testutil::se_kernel(7.0, 1.5, 0.8));
        const NLState state = neg_log_marginal(params, inst.tree, inst.bset, inst.x, inst.y);
        const double expected = dense_nl(params, inst.tree, inst.bset, inst.x, inst.y);
        CHECK(testutil::close_rel(state.value, expected, 1e-8));
        CHECK(state.value ==
              doctest::Approx(0.5 * ((inst.x.rows() + inst.bset.total_points()) *
                                         std::log(2.0 * 3.14159265358979323846) +
                                     state.logdet_data + state.logdet_schur + state.quadratic))
                  .epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("determinant split equals the dense log determinant") {
  const Instance inst = make_instance(60, 2, 4, 2, 5150);
  const HyperParams params(testutil::se_kernel(5.0, 1.2, 0.7));
  const NLState state = neg_log_marginal(params, inst.tree, inst.bset, inst.x, inst.y);

  // dense joint with the same jitter convention
  const Eigen::VectorXd y_c = inst.y.array() - inst.y.mean();
  const std::vector<RegionData> regions = make_regions(inst.tree, inst.x, y_c, params);
  const AugmentedCov cov = assemble(regions, inst.bset, boundary_jitter(params));
  const int n = cov.data_cov.dim();
  const int nd = inst.bset.total_points();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n + nd, n + nd);
  for (int k = 0; k < cov.data_cov.block_count(); ++k) {
    const int off = cov.data_cov.offset(k);
    full.block(off, off, cov.data_cov.block_dim(k), cov.data_cov.block_dim(k)) =
        cov.data_cov.block(k);
  }
  for (const auto& blk : cov.cross) {
    full.block(cov.data_cov.offset(blk.region), n + inst.bset.offset(blk.entry),
               blk.values.rows(), blk.values.cols()) = blk.values;
    full.block(n + inst.bset.offset(blk.entry), cov.data_cov.offset(blk.region),
               blk.values.cols(), blk.values.rows()) = blk.values.transpose();
  }
  for (const auto& e : cov.boundary_cov.entries()) {
    full(n + e.row, n + e.col) = e.value;
    full(n + e.col, n + e.row) = e.value;
  }
  full.bottomRightCorner(nd, nd).diagonal().array() += cov.delta_jitter;

  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(full).matrixL();
  const double dense_logdet = 2.0 * l.diagonal().array().log().sum();
  CHECK(testutil::close_rel(state.logdet_data + state.logdet_schur, dense_logdet, 1e-8));
}

TEST_CASE("likelihood is invariant to boundary entry order") {
  const Instance inst = make_instance(80, 2, 4, 3, 606);
  const HyperParams params(testutil::se_kernel(6.0, 1.0, 0.5));
  const NLState base = neg_log_marginal(params, inst.tree, inst.bset, inst.x, inst.y);

  std::vector<BoundaryEntry> reversed(inst.bset.entries().rbegin(), inst.bset.entries().rend());
  const NLState flipped =
      neg_log_marginal(params, inst.tree, BoundarySet(std::move(reversed)), inst.x, inst.y);
  CHECK(testutil::close_rel(flipped.value, base.value, 1e-9));
}

TEST_CASE("indefinite covariance yields an infinite sentinel, not a crash") {
  Eigen::MatrixXd x(8, 1);
  for (int i = 0; i < 8; ++i) x(i, 0) = (i < 4) ? 1.0 : 2.0;  // heavy duplication
  x(1, 0) = 1.0;
  Eigen::VectorXd y(8);
  y.setOnes();
  const SpatialTree tree = SpatialTree::build(x, 1, 0);
  KernelSpec kernel = testutil::se_kernel(10.0, 1.0, 0.0);  // no noise, singular blocks
  const NLState state = neg_log_marginal(HyperParams(kernel), tree, BoundarySet{}, x, y);
  CHECK(std::isinf(state.value));
  CHECK_FALSE(state.finite());
}

TEST_CASE("optimizer descends and respects the budget") {
  const Instance inst = make_instance(120, 1, 2, 1, 33);
  const HyperParams init(testutil::se_kernel(5.0, 0.8, 0.5));
  const NLState at_init = neg_log_marginal(init, inst.tree, inst.bset, inst.x, inst.y);

  const OptimizeResult result =
      optimize_hyperparams(init, inst.tree, inst.bset, inst.x, inst.y, 60, 9);
  CHECK(result.best_value <= at_init.value + 1e-12);
  CHECK(result.evaluations <= 60);
  CHECK(static_cast<int>(result.trace.size()) == result.evaluations);
  CHECK(result.best.shared());
  CHECK(std::isfinite(result.best_value));

  SUBCASE("tight budget is an exact cap") {
    const OptimizeResult tight =
        optimize_hyperparams(init, inst.tree, inst.bset, inst.x, inst.y, 20, 9);
    CHECK(tight.evaluations <= 20);
    CHECK(static_cast<int>(tight.trace.size()) == tight.evaluations);
  }
}

TEST_CASE("optimizer rejects invalid setups") {
  const Instance inst = make_instance(60, 1, 2, 1, 44);
  const HyperParams init(testutil::se_kernel(5.0, 0.8, 0.5));
  CHECK_THROWS_AS(optimize_hyperparams(init, inst.tree, inst.bset, inst.x, inst.y, 19, 1), Error);

  const HyperParams no_noise(testutil::se_kernel(5.0, 0.8, 0.0));
  CHECK_THROWS_AS(optimize_hyperparams(no_noise, inst.tree, inst.bset, inst.x, inst.y, 40, 1),
                  Error);

  const HyperParams per_region(
      std::vector<KernelSpec>{testutil::se_kernel(1, 1, 0.1), testutil::se_kernel(2, 1, 0.1)});
  CHECK_THROWS_AS(optimize_hyperparams(per_region, inst.tree, inst.bset, inst.x, inst.y, 40, 1),
                  Error);
}

TEST_CASE("generate-and-recover lands near the true parameters") {
  SimSpec spec;
  spec.n = 500;
  spec.dim = 1;
  spec.kernel = testutil::se_kernel(10.0, 1.0, 1.0);
  spec.box_lo = Eigen::VectorXd::Zero(1);
  spec.box_hi = Eigen::VectorXd::Constant(1, 10.0);
  spec.seed = 2718;
  const Dataset data = sample_gp_dataset(spec);

  const SpatialTree tree = SpatialTree::build(data.x, 4, 2718);
  const BoundarySet bset = place_pseudo_points(tree, 3, 2718);

  // start away from the truth
  const HyperParams init(testutil::se_kernel(3.0, 0.4, 0.3));
  const OptimizeResult result =
      optimize_hyperparams(init, tree, bset, data.x, data.y, 150, 7);
  const KernelSpec& best = result.best.specs().front();
  CHECK(std::abs(std::log(best.tau) - std::log(10.0)) <= 0.7);
  CHECK(std::abs(std::log(best.rho) - std::log(1.0)) <= 0.7);
  CHECK(std::abs(std::log(best.noise_var) - std::log(1.0)) <= 0.7);
}
