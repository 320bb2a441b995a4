#include "patchwork.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "patchwork/metrics.hpp"
#include "patchwork/model.hpp"
#include "patchwork/reference.hpp"
#include "patchwork/serialize.hpp"
#include "patchwork/simulate.hpp"

struct pk_model {
  patchwork::PatchworkModel impl;
};

namespace {

thread_local std::string g_last_error;

pk_status status_of(const patchwork::Error& err) {
  return err.kind() == patchwork::ErrorKind::Numeric ? PK_ERROR_NUMERIC : PK_ERROR_INPUT;
}

pk_status fail(pk_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
pk_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PK_OK;
  } catch (const patchwork::Error& err) {
    return fail(status_of(err), err.what());
  } catch (const std::bad_alloc&) {
    return fail(PK_ERROR_NUMERIC, "out of memory");
  } catch (const std::exception& err) {
    return fail(PK_ERROR_INPUT, err.what());
  }
}

patchwork::KernelSpec kernel_from(const pk_kernel& k) {
  patchwork::KernelSpec spec;
  switch (k.family) {
    case PK_KERNEL_SQUARED_EXPONENTIAL:
      spec.family = patchwork::KernelFamily::SquaredExponential;
      break;
    case PK_KERNEL_EXPONENTIAL:
      spec.family = patchwork::KernelFamily::Exponential;
      break;
    default:
      patchwork::throw_error(patchwork::ErrorKind::Input, "unknown kernel family code");
  }
  spec.tau = k.tau;
  spec.rho = k.rho;
  spec.noise_var = k.noise_var;
  spec.validate();
  return spec;
}

Eigen::MatrixXd points_from(const double* x, int64_t n, int32_t dim) {
  if (x == nullptr || n < 0 || dim < 1) {
    patchwork::throw_error(patchwork::ErrorKind::Input, "bad point array");
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      x, n, dim);
}

void require(bool ok, const char* message) {
  if (!ok) patchwork::throw_error(patchwork::ErrorKind::Input, message);
}

}  // namespace

extern "C" {

const char* pk_version(void) { return "patchwork 1.0.0"; }

size_t pk_last_error(char* buffer, size_t buffer_size) {
  if (buffer != nullptr && buffer_size > 0) {
    const size_t count = g_last_error.size() < buffer_size - 1 ? g_last_error.size()
                                                               : buffer_size - 1;
    std::memcpy(buffer, g_last_error.data(), count);
    buffer[count] = '\0';
  }
  return g_last_error.size();
}

void pk_string_free(char* s) { delete[] s; }

pk_status pk_simulate(const pk_kernel* kernel, int64_t n, int32_t dim, const double* box_lo,
                      const double* box_hi, uint64_t seed, double* out_x, double* out_y,
                      double* out_f) {
  return guarded([&] {
    require(kernel != nullptr && out_x != nullptr && out_y != nullptr, "null argument");
    require(box_lo != nullptr && box_hi != nullptr, "null box bounds");
    patchwork::SimSpec spec;
    spec.n = n;
    spec.dim = dim;
    spec.kernel = kernel_from(*kernel);
    spec.box_lo = Eigen::Map<const Eigen::VectorXd>(box_lo, dim > 0 ? dim : 0);
    spec.box_hi = Eigen::Map<const Eigen::VectorXd>(box_hi, dim > 0 ? dim : 0);
    spec.seed = seed;
    const patchwork::Dataset data = patchwork::sample_gp_dataset(spec);
    for (int64_t i = 0; i < n; ++i) {
      for (int32_t j = 0; j < dim; ++j) out_x[i * dim + j] = data.x(i, j);
      out_y[i] = data.y[i];
      if (out_f != nullptr) out_f[i] = data.f_true[i];
    }
  });
}

pk_status pk_fit(const double* x, const double* y, int64_t n, int32_t dim,
                 const pk_kernel* kernels, int32_t kernel_count, const pk_fit_options* options,
                 pk_model** out_model) {
  return guarded([&] {
    require(y != nullptr && kernels != nullptr && options != nullptr && out_model != nullptr,
            "null argument");
    require(kernel_count >= 1, "kernel_count must be >= 1");
    const Eigen::MatrixXd xm = points_from(x, n, dim);
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y, n);

    std::vector<patchwork::KernelSpec> specs;
    specs.reserve(static_cast<std::size_t>(kernel_count));
    for (int32_t i = 0; i < kernel_count; ++i) specs.push_back(kernel_from(kernels[i]));
    const patchwork::HyperParams params(std::move(specs));

    patchwork::FitOptions fit_options;
    fit_options.optimize = options->optimize != 0;
    if (options->budget > 0) fit_options.budget = options->budget;
    const int b = options->pseudo_per_boundary < 0 ? patchwork::kDefaultPseudoPerBoundary
                                                   : options->pseudo_per_boundary;

    auto model = std::make_unique<pk_model>();
    model->impl = patchwork::PatchworkModel::fit(xm, yv, options->regions, b, params,
                                                 options->seed, fit_options);
    *out_model = model.release();
  });
}

void pk_model_free(pk_model* model) { delete model; }

pk_status pk_model_save(const pk_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr && path != nullptr, "null argument");
    model->impl.save(path);
  });
}

pk_status pk_model_load(const char* path, pk_model** out_model) {
  return guarded([&] {
    require(path != nullptr && out_model != nullptr, "null argument");
    auto model = std::make_unique<pk_model>();
    model->impl = patchwork::PatchworkModel::load(path);
    *out_model = model.release();
  });
}

pk_status pk_model_info_json(const pk_model* model, char** out_json) {
  return guarded([&] {
    require(model != nullptr && out_json != nullptr, "null argument");
    const std::string text = patchwork::model_info_json(model->impl).dump(2);
    char* buffer = new char[text.size() + 1];
    std::memcpy(buffer, text.data(), text.size() + 1);
    *out_json = buffer;
  });
}

int32_t pk_model_dim(const pk_model* model) { return model == nullptr ? 0 : model->impl.dim(); }

int64_t pk_model_train_size(const pk_model* model) {
  return model == nullptr ? 0 : model->impl.train_size();
}

int32_t pk_model_region_count(const pk_model* model) {
  return model == nullptr ? 0 : model->impl.region_count();
}

pk_status pk_model_train_data(const pk_model* model, double* out_x, double* out_y) {
  return guarded([&] {
    require(model != nullptr, "null argument");
    const int32_t dim = model->impl.dim();
    if (out_x != nullptr) {
      const Eigen::MatrixXd x = model->impl.train_inputs();
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (int32_t j = 0; j < dim; ++j) out_x[i * dim + j] = x(i, j);
      }
    }
    if (out_y != nullptr) {
      const Eigen::VectorXd y = model->impl.train_targets();
      for (Eigen::Index i = 0; i < y.size(); ++i) out_y[i] = y[i];
    }
  });
}

pk_status pk_predict(const pk_model* model, const double* x, int64_t n, int32_t dim,
                     double* out_mean, double* out_var, int32_t* out_region) {
  return guarded([&] {
    require(model != nullptr && out_mean != nullptr && out_var != nullptr, "null argument");
    require(dim == model->impl.dim(), "point dimension disagrees with the model");
    const Eigen::MatrixXd xm = points_from(x, n, dim);
    for (int64_t i = 0; i < n; ++i) {
      const patchwork::Prediction p = model->impl.predict(xm.row(i).transpose());
      out_mean[i] = p.mean;
      out_var[i] = p.variance;
      if (out_region != nullptr) out_region[i] = p.region;
    }
  });
}

pk_status pk_predict_boundary(const pk_model* model, const double* x, int64_t n, int32_t dim,
                              double* out_mean_lo, double* out_var_lo, double* out_mean_hi,
                              double* out_var_hi, int32_t* out_region_lo,
                              int32_t* out_region_hi) {
  return guarded([&] {
    require(model != nullptr && out_mean_lo != nullptr && out_var_lo != nullptr &&
                out_mean_hi != nullptr && out_var_hi != nullptr,
            "null argument");
    require(dim == model->impl.dim(), "point dimension disagrees with the model");
    const Eigen::MatrixXd xm = points_from(x, n, dim);
    for (int64_t i = 0; i < n; ++i) {
      const patchwork::BoundaryPrediction p =
          model->impl.predict_on_boundary(xm.row(i).transpose());
      out_mean_lo[i] = p.side_k.mean;
      out_var_lo[i] = p.side_k.variance;
      out_mean_hi[i] = p.side_l.mean;
      out_var_hi[i] = p.side_l.variance;
      if (out_region_lo != nullptr) out_region_lo[i] = p.side_k.region;
      if (out_region_hi != nullptr) out_region_hi[i] = p.side_l.region;
    }
  });
}

pk_status pk_benchmark_points(const pk_model* model, int64_t n_interior, int64_t n_boundary,
                              uint64_t seed, double* out_interior, double* out_boundary,
                              int64_t* out_boundary_count) {
  return guarded([&] {
    require(model != nullptr && out_boundary_count != nullptr, "null argument");
    require(n_interior == 0 || out_interior != nullptr, "null interior buffer");
    require(n_boundary == 0 || out_boundary != nullptr, "null boundary buffer");
    const patchwork::TreeNode& root = model->impl.tree().node(model->impl.tree().root());
    const patchwork::BenchmarkTargets targets = patchwork::benchmark_prediction_targets(
        model->impl.tree(), model->impl.boundaries(), root.box_lo, root.box_hi, n_interior,
        n_boundary, seed);
    const int32_t dim = model->impl.dim();
    for (Eigen::Index i = 0; i < targets.interior.rows(); ++i) {
      for (int32_t j = 0; j < dim; ++j) out_interior[i * dim + j] = targets.interior(i, j);
    }
    for (Eigen::Index i = 0; i < targets.boundary.rows(); ++i) {
      for (int32_t j = 0; j < dim; ++j) out_boundary[i * dim + j] = targets.boundary(i, j);
    }
    *out_boundary_count = targets.boundary.rows();
  });
}

pk_status pk_exact_gp(const pk_kernel* kernel, const double* x, const double* y, int64_t n,
                      int32_t dim, const double* x_star, int64_t n_star, double* out_mean,
                      double* out_var) {
  return guarded([&] {
    require(kernel != nullptr && y != nullptr && out_mean != nullptr && out_var != nullptr,
            "null argument");
    const patchwork::KernelSpec spec = kernel_from(*kernel);
    const Eigen::MatrixXd xm = points_from(x, n, dim);
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y, n);
    const Eigen::MatrixXd xs = points_from(x_star, n_star, dim);
    const Eigen::MatrixX2d result = patchwork::exact_gp_predict_batch(spec, xm, yv, xs);
    for (int64_t i = 0; i < n_star; ++i) {
      out_mean[i] = result(i, 0);
      out_var[i] = result(i, 1);
    }
  });
}

pk_status pk_mse(const double* truth, const double* pred, int64_t n, double* out) {
  return guarded([&] {
    require(truth != nullptr && pred != nullptr && out != nullptr, "null argument");
    *out = patchwork::mse(Eigen::Map<const Eigen::VectorXd>(truth, n),
                          Eigen::Map<const Eigen::VectorXd>(pred, n));
  });
}

pk_status pk_nlpd(const double* truth, const double* mean, const double* var, int64_t n,
                  double* out) {
  return guarded([&] {
    require(truth != nullptr && mean != nullptr && var != nullptr && out != nullptr,
            "null argument");
    *out = patchwork::nlpd(Eigen::Map<const Eigen::VectorXd>(truth, n),
                           Eigen::Map<const Eigen::VectorXd>(mean, n),
                           Eigen::Map<const Eigen::VectorXd>(var, n));
  });
}

pk_status pk_boundary_metrics(const double* bench_mean, const double* bench_var,
                              const double* mean_lo, const double* var_lo, const double* mean_hi,
                              const double* var_hi, int64_t n, double out[4]) {
  return guarded([&] {
    require(bench_mean != nullptr && bench_var != nullptr && mean_lo != nullptr &&
                var_lo != nullptr && mean_hi != nullptr && var_hi != nullptr && out != nullptr,
            "null argument");
    const auto map = [n](const double* p) { return Eigen::Map<const Eigen::VectorXd>(p, n); };
    const patchwork::BoundaryMetricValues values =
        patchwork::boundary_metrics(map(bench_mean), map(bench_var), map(mean_lo), map(var_lo),
                                    map(mean_hi), map(var_hi));
    out[0] = values.b_mse;
    out[1] = values.msm;
    out[2] = values.b_mse_var;
    out[3] = values.msm_var;
  });
}

}  // extern "C"
