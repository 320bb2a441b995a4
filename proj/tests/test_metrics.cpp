#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "patchwork/metrics.hpp"
#include "patchwork/model.hpp"
#include "patchwork/simulate.hpp"
#include "util.hpp"

using namespace patchwork;

TEST_CASE("mse basics") {
  Eigen::VectorXd a(3), b(3);
  a << 1.0, 2.0, 3.0;
  b = a;
  CHECK(mse(a, b) == 0.0);

  Eigen::VectorXd truth(2), pred(2);
  truth << 0.0, 0.0;
  pred << 1.0, -1.0;
  CHECK(mse(truth, pred) == doctest::Approx(1.0));

  CHECK_THROWS_AS(mse(a, truth), Error);
  CHECK_THROWS_AS(mse(Eigen::VectorXd(0), Eigen::VectorXd(0)), Error);
}

TEST_CASE("mse equals the naive loop") {
  Rng rng(12);
  Eigen::VectorXd truth(40), pred(40);
  for (int i = 0; i < 40; ++i) {
    truth[i] = rng.normal();
    pred[i] = rng.normal();
  }
  double sum = 0.0;
  for (int i = 0; i < 40; ++i) sum += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  CHECK(mse(truth, pred) == doctest::Approx(sum / 40.0).epsilon(1e-14));
}

TEST_CASE("nlpd closed forms") {
  Eigen::VectorXd y(4), mu(4), var(4);
  y << 1.0, -2.0, 0.5, 3.0;
  mu = y;
  var.setConstant(1.0 / (2.0 * 3.14159265358979323846));
  CHECK(nlpd(y, mu, var) == doctest::Approx(0.0).epsilon(1e-14));

  var.setConstant(1.0);
  CHECK(nlpd(y, mu, var) == doctest::Approx(0.9189385332046727).epsilon(1e-14));
}

TEST_CASE("nlpd equals the naive loop and validates variances") {
  Rng rng(13);
  Eigen::VectorXd y(30), mu(30), var(30);
  for (int i = 0; i < 30; ++i) {
    y[i] = rng.normal();
    mu[i] = rng.normal();
    var[i] = 0.2 + rng.uniform01();
  }
  double sum = 0.0;
  for (int i = 0; i < 30; ++i) {
    sum += (y[i] - mu[i]) * (y[i] - mu[i]) / (2.0 * var[i]) +
           0.5 * std::log(2.0 * 3.14159265358979323846 * var[i]);
  }
  CHECK(nlpd(y, mu, var) == doctest::Approx(sum / 30.0).epsilon(1e-13));

  var[7] = 0.0;
  try {
    nlpd(y, mu, var);
    FAIL("expected an input error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }
}

TEST_CASE("metrics are invariant to test point order") {
  Rng rng(14);
  const int n = 25;
  Eigen::VectorXd y(n), mu(n), var(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.normal();
    mu[i] = rng.normal();
    var[i] = 0.5 + rng.uniform01();
  }
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), std::mt19937(5));
  Eigen::VectorXd y2(n), mu2(n), var2(n);
  for (int i = 0; i < n; ++i) {
    y2[i] = y[perm[static_cast<std::size_t>(i)]];
    mu2[i] = mu[perm[static_cast<std::size_t>(i)]];
    var2[i] = var[perm[static_cast<std::size_t>(i)]];
  }
  CHECK(mse(y, mu) == doctest::Approx(mse(y2, mu2)).epsilon(1e-13));
  CHECK(nlpd(y, mu, var) == doctest::Approx(nlpd(y2, mu2, var2)).epsilon(1e-13));
}

TEST_CASE("boundary metric arithmetic") {
  Eigen::VectorXd bench(3), bench_var(3), lo(3), lo_var(3), hi(3), hi_var(3);
  bench << 1.0, 2.0, 3.0;
  bench_var.setConstant(0.5);
  lo = bench;
  lo_var = bench_var;
  hi = lo;
  hi_var = lo_var;

  SUBCASE("identical sides have zero mismatch") {
    const BoundaryMetricValues v = boundary_metrics(bench, bench_var, lo, lo_var, hi, hi_var);
    CHECK(v.msm == 0.0);
    CHECK(v.msm_var == 0.0);
    CHECK(v.b_mse == 0.0);
  }
  SUBCASE("a constant gap of two gives a mismatch of four") {
    hi.array() += 2.0;
    const BoundaryMetricValues v = boundary_metrics(bench, bench_var, lo, lo_var, hi, hi_var);
    CHECK(v.msm == doctest::Approx(4.0));
    CHECK(v.b_mse == 0.0);  // the lower side is still the benchmark
  }
  SUBCASE("length mismatch is rejected") {
    CHECK_THROWS_AS(boundary_metrics(bench, bench_var, lo, lo_var, hi, Eigen::VectorXd(2)),
                    Error);
  }
}

TEST_CASE("a report with no boundaries keeps its fields absent") {
  MetricReport report;
  report.mse = 0.25;
  report.t = 10;
  CHECK_FALSE(report.b_mse.has_value());
  CHECK_FALSE(report.msm.has_value());
  CHECK_FALSE(report.i_mse.has_value());
}

TEST_CASE("stitching strictly reduces the mean squared mismatch") {
  const Eigen::MatrixXd x = testutil::uniform_points(800, 2, 0, 10, 55);
  const Eigen::VectorXd y = testutil::smooth_targets(x, 0.5, 56);
  const HyperParams params(testutil::se_kernel(10.0, 1.0, 1.0));

  const PatchworkModel loose = PatchworkModel::fit(x, y, 8, 0, params, 55);
  const PatchworkModel stitched = PatchworkModel::fit(x, y, 8, 5, params, 55);

  const TreeNode& root = loose.tree().node(loose.tree().root());
  const BenchmarkTargets targets = benchmark_prediction_targets(
      loose.tree(), stitched.boundaries(), root.box_lo, root.box_hi, 0, 80, 77);
  REQUIRE(targets.boundary.rows() > 0);

  const auto msm_of = [&targets](const PatchworkModel& model) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < targets.boundary.rows(); ++i) {
      const BoundaryPrediction bp = model.predict_on_boundary(targets.boundary.row(i).transpose());
      const double gap = bp.side_k.mean - bp.side_l.mean;
      sum += gap * gap;
    }
    return sum / static_cast<double>(targets.boundary.rows());
  };
  CHECK(msm_of(stitched) < msm_of(loose));
}
