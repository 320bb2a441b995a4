/* C interface of the patchwork kriging library.
 *
 * All functions return pk_status; PK_OK is zero. On failure a
 * thread-local message is available through pk_last_error. Objects
 * returned through out-parameters are owned by the caller and released
 * with the matching *_free function. Point arrays are row-major, one
 * point per row.
 */
#ifndef PATCHWORK_H
#define PATCHWORK_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PK_API __declspec(dllexport)
#else
#define PK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pk_status {
  PK_OK = 0,
  PK_ERROR_INPUT = 2,   /* bad arguments, configuration or I/O */
  PK_ERROR_NUMERIC = 3  /* factorization or other numerical failure */
} pk_status;

typedef enum pk_kernel_family {
  PK_KERNEL_SQUARED_EXPONENTIAL = 0,
  PK_KERNEL_EXPONENTIAL = 1
} pk_kernel_family;

typedef struct pk_kernel {
  int32_t family;    /* pk_kernel_family */
  double tau;        /* signal variance, > 0 */
  double rho;        /* length scale, > 0 */
  double noise_var;  /* observation noise variance, >= 0 */
} pk_kernel;

typedef struct pk_fit_options {
  int32_t regions;             /* requested region count K; 0 picks N/K <= 600 */
  int32_t pseudo_per_boundary; /* sites per boundary B; < 0 picks the default 7 */
  uint64_t seed;
  int32_t optimize;            /* nonzero: maximize the marginal likelihood first */
  int32_t budget;              /* max likelihood evaluations when optimizing */
} pk_fit_options;

typedef struct pk_model pk_model;

PK_API const char* pk_version(void);

/* Copies the calling thread's last error message into buffer (always
 * NUL-terminated when buffer_size > 0) and returns the full message
 * length. */
PK_API size_t pk_last_error(char* buffer, size_t buffer_size);

PK_API void pk_string_free(char* s);

/* Draws n points uniformly over the box [lo, hi]^dim and a GP response
 * sample on them. out_x is n*dim doubles; out_y and out_f (latent values,
 * may be NULL) are n doubles. */
PK_API pk_status pk_simulate(const pk_kernel* kernel, int64_t n, int32_t dim,
                             const double* box_lo, const double* box_hi, uint64_t seed,
                             double* out_x, double* out_y, double* out_f);

/* kernel_count must be 1 (shared) or equal to the effective region count. */
PK_API pk_status pk_fit(const double* x, const double* y, int64_t n, int32_t dim,
                        const pk_kernel* kernels, int32_t kernel_count,
                        const pk_fit_options* options, pk_model** out_model);

PK_API void pk_model_free(pk_model* model);

PK_API pk_status pk_model_save(const pk_model* model, const char* path);
PK_API pk_status pk_model_load(const char* path, pk_model** out_model);

/* Fit summary (sizes, kernels, phase timings, optimizer trace) as a JSON
 * string; release with pk_string_free. */
PK_API pk_status pk_model_info_json(const pk_model* model, char** out_json);

PK_API int32_t pk_model_dim(const pk_model* model);
PK_API int64_t pk_model_train_size(const pk_model* model);
PK_API int32_t pk_model_region_count(const pk_model* model);

/* Training data in original row order and units; out_x is n*dim doubles,
 * out_y is n doubles, either may be NULL. */
PK_API pk_status pk_model_train_data(const pk_model* model, double* out_x, double* out_y);

PK_API pk_status pk_predict(const pk_model* model, const double* x, int64_t n, int32_t dim,
                            double* out_mean, double* out_var, int32_t* out_region);

/* Two-sided predictions at points lying on partition boundaries. The _lo
 * outputs belong to the straddling region with the smaller id, which is
 * also the side reported by evaluation metrics. */
PK_API pk_status pk_predict_boundary(const pk_model* model, const double* x, int64_t n,
                                     int32_t dim, double* out_mean_lo, double* out_var_lo,
                                     double* out_mean_hi, double* out_var_hi,
                                     int32_t* out_region_lo, int32_t* out_region_hi);

/* Benchmark target sampler: n_interior points uniform over the training
 * box away from all boundaries, and up to n_boundary points on the
 * recorded boundaries away from all pseudo-observation sites. The actual
 * boundary count is written to out_boundary_count (0 when the model has a
 * single region). */
PK_API pk_status pk_benchmark_points(const pk_model* model, int64_t n_interior,
                                     int64_t n_boundary, uint64_t seed, double* out_interior,
                                     double* out_boundary, int64_t* out_boundary_count);

/* Dense exact GP prediction, for benchmark scoring of small datasets. */
PK_API pk_status pk_exact_gp(const pk_kernel* kernel, const double* x, const double* y,
                             int64_t n, int32_t dim, const double* x_star, int64_t n_star,
                             double* out_mean, double* out_var);

PK_API pk_status pk_mse(const double* truth, const double* pred, int64_t n, double* out);
PK_API pk_status pk_nlpd(const double* truth, const double* mean, const double* var, int64_t n,
                         double* out);

/* Boundary scores over n straddled test points: out[0] = mean squared
 * error of the lower-id side against the benchmark mean, out[1] = mean
 * squared mismatch between the two sides' means, out[2] and out[3] the
 * variance analogues. */
PK_API pk_status pk_boundary_metrics(const double* bench_mean, const double* bench_var,
                                     const double* mean_lo, const double* var_lo,
                                     const double* mean_hi, const double* var_hi, int64_t n,
                                     double out[4]);

#ifdef __cplusplus
}
#endif

#endif /* PATCHWORK_H */
