#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "patchwork.h"

namespace {

std::string last_error() {
  const size_t n = pk_last_error(nullptr, 0);
  std::string msg(n + 1, '\0');
  pk_last_error(msg.data(), msg.size());
  msg.resize(n);
  return msg;
}

struct Fixture {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> f;
  pk_kernel kernel{PK_KERNEL_SQUARED_EXPONENTIAL, 10.0, 1.0, 1.0};
  int64_t n = 400;
  int32_t dim = 2;

  Fixture() {
    x.resize(static_cast<std::size_t>(n * dim));
    y.resize(static_cast<std::size_t>(n));
    f.resize(static_cast<std::size_t>(n));
    const double lo[2] = {0.0, 0.0};
    const double hi[2] = {10.0, 10.0};
    REQUIRE(pk_simulate(&kernel, n, dim, lo, hi, 99, x.data(), y.data(), f.data()) == PK_OK);
  }

  pk_model* fit(int k, int b, uint64_t seed) const {
    pk_fit_options options{};
    options.regions = k;
    options.pseudo_per_boundary = b;
    options.seed = seed;
    pk_model* model = nullptr;
    REQUIRE(pk_fit(x.data(), y.data(), n, dim, &kernel, 1, &options, &model) == PK_OK);
    REQUIRE(model != nullptr);
    return model;
  }
};

}  // namespace

TEST_CASE("version string is present") {
  REQUIRE(pk_version() != nullptr);
  CHECK(std::string(pk_version()).find("patchwork") != std::string::npos);
}

TEST_CASE("simulate validates its arguments") {
  pk_kernel kernel{PK_KERNEL_SQUARED_EXPONENTIAL, 10.0, 1.0, 1.0};
  double out = 0.0;
  CHECK(pk_simulate(nullptr, 1, 1, &out, &out, 0, &out, &out, nullptr) == PK_ERROR_INPUT);
  CHECK_FALSE(last_error().empty());

  kernel.tau = -1.0;
  double lo = 0.0, hi = 1.0;
  double x[4], y[4];
  CHECK(pk_simulate(&kernel, 4, 1, &lo, &hi, 0, x, y, nullptr) == PK_ERROR_INPUT);
  kernel.tau = 1.0;
  kernel.family = 99;
  CHECK(pk_simulate(&kernel, 4, 1, &lo, &hi, 0, x, y, nullptr) == PK_ERROR_INPUT);
}

TEST_CASE("fit, predict, save, load through the C surface") {
  const Fixture fx;
  pk_model* model = fx.fit(4, 3, 123);

  CHECK(pk_model_dim(model) == 2);
  CHECK(pk_model_train_size(model) == fx.n);
  CHECK(pk_model_region_count(model) == 4);

  std::vector<double> mean(static_cast<std::size_t>(fx.n));
  std::vector<double> var(static_cast<std::size_t>(fx.n));
  std::vector<int32_t> region(static_cast<std::size_t>(fx.n));
  REQUIRE(pk_predict(model, fx.x.data(), fx.n, fx.dim, mean.data(), var.data(), region.data()) ==
          PK_OK);
  for (int64_t i = 0; i < fx.n; ++i) {
    CHECK(var[static_cast<std::size_t>(i)] >= 0.0);
    CHECK(var[static_cast<std::size_t>(i)] <= fx.kernel.tau + 1e-8);
    CHECK(region[static_cast<std::size_t>(i)] >= 0);
    CHECK(region[static_cast<std::size_t>(i)] < 4);
  }

  double err = 0.0;
  REQUIRE(pk_mse(fx.y.data(), mean.data(), fx.n, &err) == PK_OK);
  CHECK(err < 2.0);  // in-sample error well under the prior variance

  const std::string path =
      (std::filesystem::temp_directory_path() / "pk_capi_model.bundle").string();
  REQUIRE(pk_model_save(model, path.c_str()) == PK_OK);
  pk_model* loaded = nullptr;
  REQUIRE(pk_model_load(path.c_str(), &loaded) == PK_OK);

  std::vector<double> mean2(static_cast<std::size_t>(fx.n));
  std::vector<double> var2(static_cast<std::size_t>(fx.n));
  REQUIRE(pk_predict(loaded, fx.x.data(), fx.n, fx.dim, mean2.data(), var2.data(), nullptr) ==
          PK_OK);
  CHECK(mean == mean2);
  CHECK(var == var2);

  char* info = nullptr;
  REQUIRE(pk_model_info_json(model, &info) == PK_OK);
  REQUIRE(info != nullptr);
  CHECK(std::string(info).find("\"regions\"") != std::string::npos);
  pk_string_free(info);

  std::remove(path.c_str());
  pk_model_free(model);
  pk_model_free(loaded);
}

TEST_CASE("per-region kernels and automatic region counts through the C surface") {
  const Fixture fx;

  // one kernel per effective region
  std::vector<pk_kernel> kernels(4, fx.kernel);
  kernels[2].tau = 5.0;
  pk_fit_options options{};
  options.regions = 4;
  options.pseudo_per_boundary = 2;
  options.seed = 11;
  pk_model* model = nullptr;
  REQUIRE(pk_fit(fx.x.data(), fx.y.data(), fx.n, fx.dim, kernels.data(), 4, &options, &model) ==
          PK_OK);
  pk_model_free(model);

  // a kernel list that matches neither 1 nor the region count
  CHECK(pk_fit(fx.x.data(), fx.y.data(), fx.n, fx.dim, kernels.data(), 3, &options, &model) ==
        PK_ERROR_INPUT);

  // automatic region count: 400 points stay in a single region
  options.regions = 0;
  options.pseudo_per_boundary = -1;
  REQUIRE(pk_fit(fx.x.data(), fx.y.data(), fx.n, fx.dim, &fx.kernel, 1, &options, &model) ==
          PK_OK);
  CHECK(pk_model_region_count(model) == 1);
  pk_model_free(model);
}

TEST_CASE("train data round trips through the C surface") {
  const Fixture fx;
  pk_model* model = fx.fit(2, 2, 5);
  std::vector<double> x(static_cast<std::size_t>(fx.n * fx.dim));
  std::vector<double> y(static_cast<std::size_t>(fx.n));
  REQUIRE(pk_model_train_data(model, x.data(), y.data()) == PK_OK);
  CHECK(x == fx.x);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(std::abs(y[i] - fx.y[i]) <= 1e-12 * (1.0 + std::abs(fx.y[i])));
  }
  pk_model_free(model);
}

TEST_CASE("boundary predictions and benchmark points through the C surface") {
  const Fixture fx;
  pk_model* model = fx.fit(4, 5, 321);

  std::vector<double> interior(100 * 2);
  std::vector<double> boundary(40 * 2);
  int64_t nb = 0;
  REQUIRE(pk_benchmark_points(model, 100, 40, 9, interior.data(), boundary.data(), &nb) == PK_OK);
  REQUIRE(nb == 40);

  std::vector<double> mean_lo(40), var_lo(40), mean_hi(40), var_hi(40);
  std::vector<int32_t> lo_region(40), hi_region(40);
  REQUIRE(pk_predict_boundary(model, boundary.data(), nb, 2, mean_lo.data(), var_lo.data(),
                              mean_hi.data(), var_hi.data(), lo_region.data(),
                              hi_region.data()) == PK_OK);
  for (int64_t i = 0; i < nb; ++i) {
    CHECK(lo_region[static_cast<std::size_t>(i)] < hi_region[static_cast<std::size_t>(i)]);
  }

  double values[4] = {0, 0, 0, 0};
  REQUIRE(pk_boundary_metrics(mean_lo.data(), var_lo.data(), mean_lo.data(), var_lo.data(),
                              mean_hi.data(), var_hi.data(), nb, values) == PK_OK);
  CHECK(values[0] == 0.0);  // benchmark equals the low side here
  CHECK(values[1] >= 0.0);

  // interior points are not boundary points
  CHECK(pk_predict_boundary(model, interior.data(), 1, 2, mean_lo.data(), var_lo.data(),
                            mean_hi.data(), var_hi.data(), nullptr, nullptr) == PK_ERROR_INPUT);
  pk_model_free(model);
}

TEST_CASE("exact gp and metric helpers") {
  const Fixture fx;
  std::vector<double> mean(10), var(10);
  REQUIRE(pk_exact_gp(&fx.kernel, fx.x.data(), fx.y.data(), fx.n, fx.dim, fx.x.data(), 10,
                      mean.data(), var.data()) == PK_OK);
  for (double v : var) {
    CHECK(v >= 0.0);
    CHECK(v <= fx.kernel.tau);
  }

  double out = 0.0;
  CHECK(pk_nlpd(mean.data(), mean.data(), var.data(), 10, &out) == PK_OK);
  CHECK(pk_mse(nullptr, mean.data(), 10, &out) == PK_ERROR_INPUT);

  std::vector<double> bad_var(10, -1.0);
  CHECK(pk_nlpd(mean.data(), mean.data(), bad_var.data(), 10, &out) == PK_ERROR_INPUT);
}

TEST_CASE("dimension mismatches are input errors") {
  const Fixture fx;
  pk_model* model = fx.fit(2, 1, 6);
  double mean = 0.0, var = 0.0;
  double p[3] = {0.0, 0.0, 0.0};
  CHECK(pk_predict(model, p, 1, 3, &mean, &var, nullptr) == PK_ERROR_INPUT);
  CHECK(last_error().find("dimension") != std::string::npos);
  pk_model_free(model);
}

TEST_CASE("numeric failures surface as the numeric status") {
  // two identical points with no noise: the covariance is singular
  const double x[2] = {1.0, 1.0};
  const double y[2] = {0.5, 0.7};
  pk_kernel kernel{PK_KERNEL_SQUARED_EXPONENTIAL, 1.0, 1.0, 0.0};
  double p = 1.0;
  double mean = 0.0, var = 0.0;
  CHECK(pk_exact_gp(&kernel, x, y, 2, 1, &p, 1, &mean, &var) == PK_ERROR_NUMERIC);
}

TEST_CASE("last error message is truncated safely") {
  pk_kernel kernel{99, 1.0, 1.0, 0.0};
  double buf = 0.0;
  double lo = 0.0, hi = 1.0;
  REQUIRE(pk_simulate(&kernel, 1, 1, &lo, &hi, 0, &buf, &buf, nullptr) == PK_ERROR_INPUT);
  const size_t full = pk_last_error(nullptr, 0);
  CHECK(full > 4);
  char tiny[5];
  CHECK(pk_last_error(tiny, sizeof(tiny)) == full);
  CHECK(tiny[4] == '\0');
  CHECK(std::string(tiny).size() == 4);
}
