#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "patchwork/model.hpp"
#include "patchwork/serialize.hpp"
#include "util.hpp"

using namespace patchwork;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

PatchworkModel small_model(std::uint64_t seed) {
  const Eigen::MatrixXd x = testutil::uniform_points(150, 2, 0, 10, seed);
  const Eigen::VectorXd y = testutil::smooth_targets(x, 0.4, seed + 1);
  return PatchworkModel::fit(x, y, 4, 3, HyperParams(testutil::se_kernel(6.0, 1.2, 0.5)), seed);
}

}  // namespace

TEST_CASE("kernel json round trip") {
  const KernelSpec spec = testutil::exp_kernel(3.5, 0.8, 0.2);
  const KernelSpec back = kernel_from_json(kernel_to_json(spec));
  CHECK(back.family == spec.family);
  CHECK(back.tau == spec.tau);
  CHECK(back.rho == spec.rho);
  CHECK(back.noise_var == spec.noise_var);

  CHECK_THROWS_AS(kernel_from_json(nlohmann::json{{"family", "matern"},
                                                  {"tau", 1.0},
                                                  {"rho", 1.0},
                                                  {"noise_var", 0.0}}),
                  Error);
}

TEST_CASE("tree json round trip preserves routing") {
  const Eigen::MatrixXd x = testutil::uniform_points(300, 3, 0, 10, 17);
  const SpatialTree tree = SpatialTree::build(x, 8, 17);
  const SpatialTree back = tree_from_json(tree_to_json(tree));
  CHECK(back.leaf_count() == tree.leaf_count());
  CHECK(back.dim() == tree.dim());
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd p(3);
    for (int j = 0; j < 3; ++j) p[j] = rng.uniform(-1, 11);
    CHECK(back.route(p) == tree.route(p));
  }
}

TEST_CASE("simspec json round trip") {
  SimSpec spec;
  spec.n = 123;
  spec.dim = 2;
  spec.kernel = testutil::se_kernel(10.0, 1.0, 1.0);
  spec.box_lo = Eigen::VectorXd::Zero(2);
  spec.box_hi = Eigen::VectorXd::Constant(2, 6.0);
  spec.seed = 99;
  const SimSpec back = simspec_from_json(simspec_to_json(spec));
  CHECK(back.n == spec.n);
  CHECK(back.dim == spec.dim);
  CHECK(back.seed == spec.seed);
  CHECK(back.kernel.tau == spec.kernel.tau);
  CHECK((back.box_hi - spec.box_hi).norm() == 0.0);
}

TEST_CASE("model bundles reload to bit-identical predictions") {
  const PatchworkModel model = small_model(42);
  const std::string path = temp_path("pk_test_model.bundle");
  model.save(path);
  const PatchworkModel loaded = PatchworkModel::load(path);

  CHECK(loaded.region_count() == model.region_count());
  CHECK(loaded.pseudo_count() == model.pseudo_count());
  CHECK(loaded.mean_offset() == model.mean_offset());
  CHECK(loaded.train_size() == model.train_size());

  Rng rng(1);
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd p(2);
    p << rng.uniform(0, 10), rng.uniform(0, 10);
    const Prediction a = model.predict(p);
    const Prediction b = loaded.predict(p);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    CHECK(a.region == b.region);
  }
  for (const auto& entry : loaded.boundaries().entries()) {
    const Eigen::VectorXd p = entry.points.row(0).transpose();
    const BoundaryPrediction a = model.predict_on_boundary(p);
    const BoundaryPrediction b = loaded.predict_on_boundary(p);
    CHECK(a.side_k.mean == b.side_k.mean);
    CHECK(a.side_l.variance == b.side_l.variance);
  }

  const Eigen::MatrixXd xa = model.train_inputs();
  const Eigen::MatrixXd xb = loaded.train_inputs();
  CHECK((xa - xb).norm() == 0.0);
  const Eigen::VectorXd ya = model.train_targets();
  const Eigen::VectorXd yb = loaded.train_targets();
  CHECK((ya - yb).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("refits with one seed write byte-identical bundles") {
  const std::string path_a = temp_path("pk_test_model_a.bundle");
  const std::string path_b = temp_path("pk_test_model_b.bundle");
  small_model(77).save(path_a);
  small_model(77).save(path_b);
  CHECK(file_bytes(path_a) == file_bytes(path_b));

  const std::string path_c = temp_path("pk_test_model_c.bundle");
  small_model(78).save(path_c);
  CHECK(file_bytes(path_a) != file_bytes(path_c));
  std::remove(path_a.c_str());
  std::remove(path_b.c_str());
  std::remove(path_c.c_str());
}

TEST_CASE("loading rejects missing or foreign files") {
  CHECK_THROWS_AS(PatchworkModel::load(temp_path("pk_no_such_file.bundle")), Error);

  const std::string path = temp_path("pk_bad_magic.bundle");
  {
    std::ofstream os(path, std::ios::binary);
    os << "definitely not a model bundle";
  }
  try {
    PatchworkModel::load(path);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
  std::remove(path.c_str());
}

TEST_CASE("an unfitted model refuses to save") {
  PatchworkModel model;
  CHECK_THROWS_AS(model.save(temp_path("pk_never.bundle")), Error);
}

TEST_CASE("model info json carries sizes and timings") {
  const PatchworkModel model = small_model(21);
  const nlohmann::json info = model_info_json(model);
  CHECK(info.at("regions").get<int>() == 4);
  CHECK(info.at("train_size").get<int>() == 150);
  CHECK(info.at("pseudo_total").get<int>() == model.pseudo_count());
  CHECK(info.at("timings").at("total_seconds").get<double>() >= 0.0);
  CHECK(info.at("kernels").size() == 1);
}
