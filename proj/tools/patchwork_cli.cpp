// Command-line front end for the patchwork kriging shared library. Links
// against the C interface only (patchwork.h).
//
// Subcommands: simulate | fit | predict | evaluate | sweep
// Exit codes: 0 success, 2 input/configuration error, 3 numerical failure.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "csv.hpp"
#include "patchwork.h"

namespace {

using nlohmann::json;

struct CliFailure : std::runtime_error {
  int code;
  CliFailure(int code_, const std::string& message) : std::runtime_error(message), code(code_) {}
};

std::string last_error_message() {
  const size_t n = pk_last_error(nullptr, 0);
  std::string message(n + 1, '\0');
  pk_last_error(message.data(), message.size());
  message.resize(n);
  return message;
}

void check(pk_status status, const std::string& context) {
  if (status == PK_OK) return;
  throw CliFailure(static_cast<int>(status), context + ": " + last_error_message());
}

struct ModelDeleter {
  void operator()(pk_model* m) const { pk_model_free(m); }
};
using ModelHandle = std::unique_ptr<pk_model, ModelDeleter>;

std::uint64_t splitmix64(std::uint64_t state) {
  std::uint64_t z = state + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t derive(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream));
}

struct KernelFlags {
  std::string family = "se";
  double tau = 1.0;
  double rho = 1.0;
  double noise = 0.1;

  pk_kernel build() const {
    pk_kernel k;
    if (family == "se") {
      k.family = PK_KERNEL_SQUARED_EXPONENTIAL;
    } else if (family == "exp") {
      k.family = PK_KERNEL_EXPONENTIAL;
    } else {
      throw CliFailure(2, "unknown kernel family '" + family + "' (use se or exp)");
    }
    k.tau = tau;
    k.rho = rho;
    k.noise_var = noise;
    return k;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--kernel", family, "Covariance family: se or exp")
        ->check(CLI::IsMember({"se", "exp"}));
    cmd->add_option("--tau", tau, "Signal variance");
    cmd->add_option("--rho", rho, "Length scale");
    cmd->add_option("--noise", noise, "Observation noise variance");
  }
};

json kernel_json(const pk_kernel& k) {
  return json{{"family", k.family == PK_KERNEL_EXPONENTIAL ? "exp" : "se"},
              {"tau", k.tau},
              {"rho", k.rho},
              {"noise_var", k.noise_var}};
}

pk_kernel kernel_from_json(const json& j) {
  KernelFlags flags;
  flags.family = j.at("family").get<std::string>();
  flags.tau = j.at("tau").get<double>();
  flags.rho = j.at("rho").get<double>();
  flags.noise = j.at("noise_var").get<double>();
  return flags.build();
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string out;
  std::int64_t n = 1000;
  int dim = 1;
  KernelFlags kernel;
  double box_lo = 0.0;
  double box_hi = 10.0;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& args) {
  if (args.n < 1) throw CliFailure(2, "simulate: --n must be >= 1");
  const pk_kernel kernel = args.kernel.build();
  const std::vector<double> lo(static_cast<std::size_t>(args.dim), args.box_lo);
  const std::vector<double> hi(static_cast<std::size_t>(args.dim), args.box_hi);

  std::vector<double> x(static_cast<std::size_t>(args.n * args.dim));
  std::vector<double> y(static_cast<std::size_t>(args.n));
  std::vector<double> f(static_cast<std::size_t>(args.n));
  check(pk_simulate(&kernel, args.n, args.dim, lo.data(), hi.data(), args.seed, x.data(),
                    y.data(), f.data()),
        "simulate");

  try {
    pkcli::write_dataset(args.out, args.n, args.dim, x.data(), y.data(), f.data());
  } catch (const pkcli::CsvError& e) {
    throw CliFailure(2, std::string("simulate: ") + e.what());
  }

  const json sidecar{{"n", args.n},
                     {"dim", args.dim},
                     {"kernel", kernel_json(kernel)},
                     {"box_lo", lo},
                     {"box_hi", hi},
                     {"seed", args.seed}};
  std::ofstream os(args.out + ".json");
  if (!os) throw CliFailure(2, "simulate: cannot write sidecar '" + args.out + ".json'");
  os << sidecar.dump(2) << "\n";
  std::cerr << "wrote " << args.n << " rows to " << args.out << "\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  std::string out;
  int k = 0;   // 0 = auto
  int b = -1;  // -1 = library default
  KernelFlags kernel;
  bool optimize = false;
  int budget = 150;
  std::uint64_t seed = 0;
  std::string log_path;
  std::string trace_path;
};

ModelHandle fit_model(const pkcli::Dataset& data, const FitArgs& args) {
  if (!data.has_y) throw CliFailure(2, "fit: data has no y column");
  const pk_kernel kernel = args.kernel.build();
  pk_fit_options options{};
  options.regions = args.k;
  options.pseudo_per_boundary = args.b;
  options.seed = args.seed;
  options.optimize = args.optimize ? 1 : 0;
  options.budget = args.budget;

  pk_model* raw = nullptr;
  check(pk_fit(data.x.data(), data.y.data(), data.rows, data.dim, &kernel, 1, &options, &raw),
        "fit");
  return ModelHandle(raw);
}

json model_info(const pk_model* model) {
  char* text = nullptr;
  check(pk_model_info_json(model, &text), "model info");
  const json info = json::parse(text);
  pk_string_free(text);
  return info;
}

int cmd_fit(const FitArgs& args) {
  pkcli::Dataset data;
  try {
    data = pkcli::read_dataset(args.data);
  } catch (const pkcli::CsvError& e) {
    throw CliFailure(2, std::string("fit: ") + e.what());
  }
  const ModelHandle model = fit_model(data, args);
  check(pk_model_save(model.get(), args.out.c_str()), "save");

  const json info = model_info(model.get());
  const auto& timings = info.at("timings");
  std::cerr << "fit: n=" << info.at("train_size") << " d=" << info.at("dim")
            << " regions=" << info.at("regions") << " pseudo=" << info.at("pseudo_total")
            << "\n"
            << "  partition      " << timings.at("partition_seconds").get<double>() << " s\n"
            << "  assembly       " << timings.at("assembly_seconds").get<double>() << " s\n"
            << "  factorization  " << timings.at("factorization_seconds").get<double>() << " s\n"
            << "  total          " << timings.at("total_seconds").get<double>() << " s\n";

  if (!args.log_path.empty()) {
    std::ofstream os(args.log_path);
    if (!os) throw CliFailure(2, "fit: cannot write log '" + args.log_path + "'");
    os << info.dump(2) << "\n";
  }
  if (!args.trace_path.empty()) {
    std::ofstream os(args.trace_path);
    if (!os) throw CliFailure(2, "fit: cannot write trace '" + args.trace_path + "'");
    os << "evaluation,log_tau,log_rho,log_noise,nl\n";
    if (info.contains("optimizer_trace")) {
      std::string buffer;
      for (const auto& row : info.at("optimizer_trace")) {
        buffer += std::to_string(row.at("evaluation").get<int>());
        for (const char* key : {"log_tau", "log_rho", "log_noise", "value"}) {
          buffer += ",";
          pkcli::format_double(buffer, row.at(key).get<double>());
        }
        buffer += "\n";
      }
      os << buffer;
    }
  }
  return 0;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::string data;
  std::string out;
};

int cmd_predict(const PredictArgs& args) {
  pk_model* raw = nullptr;
  check(pk_model_load(args.model.c_str(), &raw), "load");
  const ModelHandle model(raw);

  pkcli::Dataset data;
  try {
    data = pkcli::read_dataset(args.data);
  } catch (const pkcli::CsvError& e) {
    throw CliFailure(2, std::string("predict: ") + e.what());
  }
  if (data.dim != pk_model_dim(model.get())) {
    throw CliFailure(2, "predict: data dimension " + std::to_string(data.dim) +
                            " disagrees with the model dimension " +
                            std::to_string(pk_model_dim(model.get())));
  }

  std::vector<double> mean(static_cast<std::size_t>(data.rows));
  std::vector<double> var(static_cast<std::size_t>(data.rows));
  std::vector<std::int32_t> region(static_cast<std::size_t>(data.rows));
  check(pk_predict(model.get(), data.x.data(), data.rows, data.dim, mean.data(), var.data(),
                   region.data()),
        "predict");

  std::ofstream os(args.out, std::ios::binary);
  if (!os) throw CliFailure(2, "predict: cannot open '" + args.out + "' for writing");
  std::string buffer;
  for (int j = 0; j < data.dim; ++j) buffer += "x" + std::to_string(j + 1) + ",";
  buffer += "mean,variance,region\n";
  for (std::int64_t i = 0; i < data.rows; ++i) {
    for (int j = 0; j < data.dim; ++j) {
      pkcli::format_double(buffer, data.x[static_cast<std::size_t>(i * data.dim + j)]);
      buffer += ",";
    }
    pkcli::format_double(buffer, mean[static_cast<std::size_t>(i)]);
    buffer += ",";
    pkcli::format_double(buffer, var[static_cast<std::size_t>(i)]);
    buffer += "," + std::to_string(region[static_cast<std::size_t>(i)]) + "\n";
  }
  os << buffer;
  std::cerr << "wrote " << data.rows << " predictions to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct Report {
  std::optional<double> mse, nlpd;
  std::optional<double> i_mse, b_mse, msm, i_mse_var, b_mse_var, msm_var;
  std::int64_t t = 0, t_i = 0, t_b = 0;
  double predict_seconds = 0.0;

  json to_json() const {
    const auto opt = [](const std::optional<double>& v) {
      return v.has_value() ? json(*v) : json(nullptr);
    };
    return json{{"mse", opt(mse)},
                {"nlpd", opt(nlpd)},
                {"i_mse", opt(i_mse)},
                {"b_mse", opt(b_mse)},
                {"msm", opt(msm)},
                {"i_mse_var", opt(i_mse_var)},
                {"b_mse_var", opt(b_mse_var)},
                {"msm_var", opt(msm_var)},
                {"t", t},
                {"t_i", t_i},
                {"t_b", t_b},
                {"predict_seconds", predict_seconds}};
  }

  static std::string csv_header() {
    return "t,t_i,t_b,mse,nlpd,i_mse,b_mse,msm,i_mse_var,b_mse_var,msm_var,predict_seconds";
  }

  std::string csv_row() const {
    std::string row = std::to_string(t) + "," + std::to_string(t_i) + "," + std::to_string(t_b);
    const auto cell = [&row](const std::optional<double>& v) {
      row += ",";
      if (v.has_value()) pkcli::format_double(row, *v);
    };
    cell(mse);
    cell(nlpd);
    cell(i_mse);
    cell(b_mse);
    cell(msm);
    cell(i_mse_var);
    cell(b_mse_var);
    cell(msm_var);
    row += ",";
    pkcli::format_double(row, predict_seconds);
    return row;
  }
};

// Benchmark suite against the exact GP with the generating kernel: scores
// the model at fresh interior and boundary locations.
void benchmark_suite(const pk_model* model, const pk_kernel& truth, std::int64_t t_interior,
                     std::int64_t t_boundary, std::uint64_t seed, Report& report) {
  const std::int64_t n_train = pk_model_train_size(model);
  const int dim = pk_model_dim(model);

  std::vector<double> interior(static_cast<std::size_t>(t_interior * dim));
  std::vector<double> boundary(static_cast<std::size_t>(t_boundary * dim));
  std::int64_t boundary_count = 0;
  check(pk_benchmark_points(model, t_interior, t_boundary, seed, interior.data(), boundary.data(),
                            &boundary_count),
        "benchmark points");

  std::vector<double> train_x(static_cast<std::size_t>(n_train * dim));
  std::vector<double> train_y(static_cast<std::size_t>(n_train));
  check(pk_model_train_data(model, train_x.data(), train_y.data()), "train data");

  const auto bench_at = [&](const double* points, std::int64_t count, std::vector<double>& mean,
                            std::vector<double>& var) {
    mean.resize(static_cast<std::size_t>(count));
    var.resize(static_cast<std::size_t>(count));
    check(pk_exact_gp(&truth, train_x.data(), train_y.data(), n_train, dim, points, count,
                      mean.data(), var.data()),
          "exact gp benchmark");
  };

  std::vector<double> bench_mean, bench_var;
  bench_at(interior.data(), t_interior, bench_mean, bench_var);
  std::vector<double> mean(static_cast<std::size_t>(t_interior));
  std::vector<double> var(static_cast<std::size_t>(t_interior));
  check(pk_predict(model, interior.data(), t_interior, dim, mean.data(), var.data(), nullptr),
        "predict");
  double value = 0.0;
  check(pk_mse(bench_mean.data(), mean.data(), t_interior, &value), "i-mse");
  report.i_mse = value;
  check(pk_mse(bench_var.data(), var.data(), t_interior, &value), "i-mse(var)");
  report.i_mse_var = value;
  report.t_i = t_interior;

  report.t_b = boundary_count;
  if (boundary_count > 0) {
    std::vector<double> bench_mean_b, bench_var_b;
    bench_at(boundary.data(), boundary_count, bench_mean_b, bench_var_b);
    std::vector<double> mean_lo(static_cast<std::size_t>(boundary_count));
    std::vector<double> var_lo(static_cast<std::size_t>(boundary_count));
    std::vector<double> mean_hi(static_cast<std::size_t>(boundary_count));
    std::vector<double> var_hi(static_cast<std::size_t>(boundary_count));
    check(pk_predict_boundary(model, boundary.data(), boundary_count, dim, mean_lo.data(),
                              var_lo.data(), mean_hi.data(), var_hi.data(), nullptr, nullptr),
          "boundary predict");
    double values[4] = {0, 0, 0, 0};
    check(pk_boundary_metrics(bench_mean_b.data(), bench_var_b.data(), mean_lo.data(),
                              var_lo.data(), mean_hi.data(), var_hi.data(), boundary_count,
                              values),
          "boundary metrics");
    report.b_mse = values[0];
    report.msm = values[1];
    report.b_mse_var = values[2];
    report.msm_var = values[3];
  }
}

struct EvaluateArgs {
  std::string model;
  std::string data;
  double split = 0.0;  // 0 = no split; otherwise the training fraction
  FitArgs fit;         // used in split mode
  std::string truth;   // sidecar JSON with the generating kernel
  std::int64_t t_interior = 1000;
  std::int64_t t_boundary = 200;
  std::uint64_t seed = 0;
  std::string out;
  std::string csv;
};

int cmd_evaluate(const EvaluateArgs& args) {
  pkcli::Dataset data;
  try {
    data = pkcli::read_dataset(args.data);
  } catch (const pkcli::CsvError& e) {
    throw CliFailure(2, std::string("evaluate: ") + e.what());
  }
  if (!data.has_y) throw CliFailure(2, "evaluate: data has no y column");

  ModelHandle model;
  std::vector<double> test_x;
  std::vector<double> test_y;

  if (args.split > 0.0) {
    if (args.split >= 1.0) throw CliFailure(2, "evaluate: --split must be in (0, 1)");
    std::vector<std::int64_t> order(static_cast<std::size_t>(data.rows));
    for (std::int64_t i = 0; i < data.rows; ++i) order[static_cast<std::size_t>(i)] = i;
    std::uint64_t state = derive(args.seed, 0x5147ull);
    for (std::int64_t i = data.rows - 1; i > 0; --i) {
      state = splitmix64(state);
      const std::int64_t j = static_cast<std::int64_t>(state % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const std::int64_t n_train = static_cast<std::int64_t>(args.split * data.rows);
    if (n_train < 1 || n_train >= data.rows) {
      throw CliFailure(2, "evaluate: split leaves an empty train or test set");
    }
    pkcli::Dataset train;
    train.dim = data.dim;
    train.has_y = true;
    for (std::int64_t i = 0; i < data.rows; ++i) {
      const std::int64_t r = order[static_cast<std::size_t>(i)];
      if (i < n_train) {
        for (int j = 0; j < data.dim; ++j) {
          train.x.push_back(data.x[static_cast<std::size_t>(r * data.dim + j)]);
        }
        train.y.push_back(data.y[static_cast<std::size_t>(r)]);
        ++train.rows;
      } else {
        for (int j = 0; j < data.dim; ++j) {
          test_x.push_back(data.x[static_cast<std::size_t>(r * data.dim + j)]);
        }
        test_y.push_back(data.y[static_cast<std::size_t>(r)]);
      }
    }
    FitArgs fit_args = args.fit;
    fit_args.seed = derive(args.seed, 0xf17ull);
    model = fit_model(train, fit_args);
  } else {
    if (args.model.empty()) {
      throw CliFailure(2, "evaluate: give --model, or --split with fit parameters");
    }
    pk_model* raw = nullptr;
    check(pk_model_load(args.model.c_str(), &raw), "load");
    model.reset(raw);
    test_x = data.x;
    test_y = data.y;
  }

  const std::int64_t t = static_cast<std::int64_t>(test_y.size());
  if (pk_model_dim(model.get()) != data.dim) {
    throw CliFailure(2, "evaluate: data dimension disagrees with the model");
  }

  Report report;
  report.t = t;
  std::vector<double> mean(static_cast<std::size_t>(t));
  std::vector<double> var(static_cast<std::size_t>(t));
  const auto t0 = std::chrono::steady_clock::now();
  check(pk_predict(model.get(), test_x.data(), t, data.dim, mean.data(), var.data(), nullptr),
        "predict");
  report.predict_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  double value = 0.0;
  check(pk_mse(test_y.data(), mean.data(), t, &value), "mse");
  report.mse = value;
  check(pk_nlpd(test_y.data(), mean.data(), var.data(), t, &value), "nlpd");
  report.nlpd = value;

  // benchmark suite when the generating kernel is known
  std::string truth_path = args.truth;
  if (truth_path.empty()) {
    const std::string candidate = args.data + ".json";
    if (std::filesystem::exists(candidate)) truth_path = candidate;
  }
  if (!truth_path.empty()) {
    std::ifstream is(truth_path);
    if (!is) throw CliFailure(2, "evaluate: cannot read truth file '" + truth_path + "'");
    json sidecar;
    try {
      is >> sidecar;
    } catch (const json::exception& e) {
      throw CliFailure(2, "evaluate: bad truth JSON: " + std::string(e.what()));
    }
    const json kernel_node = sidecar.contains("kernel") ? sidecar.at("kernel") : sidecar;
    const pk_kernel truth = kernel_from_json(kernel_node);
    if (pk_model_train_size(model.get()) > 5000) {
      std::cerr << "evaluate: training set too large for the dense benchmark, skipping the "
                   "benchmark suite\n";
    } else {
      benchmark_suite(model.get(), truth, args.t_interior, args.t_boundary,
                      derive(args.seed, 0xbe7ull), report);
      if (report.t_b == 0) {
        std::cerr << "evaluate: the model has no boundaries; boundary metrics are absent\n";
      }
    }
  }

  const json out = report.to_json();
  if (args.out.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream os(args.out);
    if (!os) throw CliFailure(2, "evaluate: cannot write '" + args.out + "'");
    os << out.dump(2) << "\n";
  }
  if (!args.csv.empty()) {
    const bool fresh = !std::filesystem::exists(args.csv);
    std::ofstream os(args.csv, std::ios::app);
    if (!os) throw CliFailure(2, "evaluate: cannot write '" + args.csv + "'");
    if (fresh) os << Report::csv_header() << "\n";
    os << report.csv_row() << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
  std::string out;
  std::int64_t n = 2000;
  std::vector<int> dims{2};
  std::vector<double> rhos{1.0};
  std::vector<int> ks{16};
  std::vector<int> bs{0, 7};
  int replicates = 1;
  KernelFlags kernel;  // rho comes from the grid
  double box_lo = 0.0;
  double box_hi = 10.0;
  bool optimize = false;
  int budget = 150;
  std::int64_t t_interior = 1000;
  std::int64_t t_boundary = 200;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct SweepCell {
  int dim = 0;
  double rho = 0.0;
  int k = 0;
  int b = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
};

struct SweepRow {
  SweepCell cell;
  Report report;
  json timings;
  std::string error;
};

void run_sweep_cell(const SweepArgs& args, SweepRow& row) {
  const SweepCell& cell = row.cell;
  KernelFlags kernel_flags = args.kernel;
  kernel_flags.rho = cell.rho;
  const pk_kernel kernel = kernel_flags.build();

  const std::vector<double> lo(static_cast<std::size_t>(cell.dim), args.box_lo);
  const std::vector<double> hi(static_cast<std::size_t>(cell.dim), args.box_hi);
  std::vector<double> x(static_cast<std::size_t>(args.n * cell.dim));
  std::vector<double> y(static_cast<std::size_t>(args.n));
  check(pk_simulate(&kernel, args.n, cell.dim, lo.data(), hi.data(), derive(cell.seed, 0x51ull),
                    x.data(), y.data(), nullptr),
        "simulate");

  pk_fit_options options{};
  options.regions = cell.k;
  options.pseudo_per_boundary = cell.b;
  options.seed = derive(cell.seed, 0xf1ull);
  options.optimize = args.optimize ? 1 : 0;
  options.budget = args.budget;
  pk_model* raw = nullptr;
  check(pk_fit(x.data(), y.data(), args.n, cell.dim, &kernel, 1, &options, &raw), "fit");
  const ModelHandle model(raw);

  row.timings = model_info(model.get()).at("timings");
  if (args.n <= 5000) {
    const auto t0 = std::chrono::steady_clock::now();
    benchmark_suite(model.get(), kernel, args.t_interior, args.t_boundary,
                    derive(cell.seed, 0xbeull), row.report);
    row.report.predict_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } else {
    row.error = "benchmark suite skipped: n exceeds the dense benchmark guardrail";
  }
}

int cmd_sweep(const SweepArgs& args) {
  if (args.replicates < 1) throw CliFailure(2, "sweep: --replicates must be >= 1");
  if (args.jobs < 1) throw CliFailure(2, "sweep: --jobs must be >= 1");
  if (args.dims.empty() || args.rhos.empty() || args.ks.empty() || args.bs.empty()) {
    throw CliFailure(2, "sweep: every grid list must be nonempty");
  }

  std::vector<SweepRow> rows;
  std::uint64_t cell_index = 0;
  for (int dim : args.dims) {
    for (double rho : args.rhos) {
      for (int k : args.ks) {
        for (int b : args.bs) {
          for (int rep = 0; rep < args.replicates; ++rep) {
            SweepRow row;
            row.cell = {dim, rho, k, b, rep, derive(args.seed, cell_index)};
            rows.push_back(std::move(row));
            ++cell_index;
          }
        }
      }
    }
  }

  std::atomic<std::size_t> next{0};
  const auto worker = [&args, &rows, &next] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= rows.size()) return;
      try {
        run_sweep_cell(args, rows[i]);
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
    }
  };
  if (args.jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < args.jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ofstream os(args.out, std::ios::binary);
  if (!os) throw CliFailure(2, "sweep: cannot open '" + args.out + "' for writing");
  os << "n,d,rho,k,b,replicate,seed,i_mse,b_mse,msm,i_mse_var,b_mse_var,msm_var,"
        "t_partition,t_assembly,t_factorization,t_fit_total,t_predict,error\n";
  for (const auto& row : rows) {
    std::string line = std::to_string(args.n) + "," + std::to_string(row.cell.dim) + ",";
    pkcli::format_double(line, row.cell.rho);
    line += "," + std::to_string(row.cell.k) + "," + std::to_string(row.cell.b) + "," +
            std::to_string(row.cell.replicate) + "," + std::to_string(row.cell.seed);
    const auto cell = [&line](const std::optional<double>& v) {
      line += ",";
      if (v.has_value()) pkcli::format_double(line, *v);
    };
    cell(row.report.i_mse);
    cell(row.report.b_mse);
    cell(row.report.msm);
    cell(row.report.i_mse_var);
    cell(row.report.b_mse_var);
    cell(row.report.msm_var);
    for (const char* key : {"partition_seconds", "assembly_seconds", "factorization_seconds",
                            "total_seconds"}) {
      line += ",";
      if (!row.timings.is_null() && row.timings.contains(key)) {
        pkcli::format_double(line, row.timings.at(key).get<double>());
      }
    }
    line += ",";
    pkcli::format_double(line, row.report.predict_seconds);
    std::string error = row.error;
    for (char& c : error) {
      if (c == ',' || c == '\n') c = ';';
    }
    line += "," + error + "\n";
    os << line;
  }
  std::cerr << "wrote " << rows.size() << " sweep rows to " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patchwork kriging: scalable GP regression from stitched local models"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "Draw a synthetic GP dataset to CSV");
  c_sim->add_option("--out", sim.out, "Output CSV path")->required();
  c_sim->add_option("--n", sim.n, "Number of samples")->required();
  c_sim->add_option("--d", sim.dim, "Input dimension");
  sim.kernel.attach(c_sim);
  c_sim->add_option("--box-lo", sim.box_lo, "Domain lower bound per axis");
  c_sim->add_option("--box-hi", sim.box_hi, "Domain upper bound per axis");
  c_sim->add_option("--seed", sim.seed, "Random seed")->required();

  FitArgs fit;
  CLI::App* c_fit = app.add_subcommand("fit", "Fit a model and save the bundle");
  c_fit->add_option("--data", fit.data, "Training CSV")->required();
  c_fit->add_option("--out", fit.out, "Model bundle path")->required();
  c_fit->add_option("--k", fit.k, "Region count (0 = auto, N/K <= 600)");
  c_fit->add_option("--b", fit.b, "Pseudo observations per boundary (-1 = default 7)");
  fit.kernel.attach(c_fit);
  c_fit->add_flag("--optimize", fit.optimize, "Maximize the marginal likelihood first");
  c_fit->add_option("--budget", fit.budget, "Likelihood evaluation budget");
  c_fit->add_option("--seed", fit.seed, "Random seed")->required();
  c_fit->add_option("--log", fit.log_path, "Write the fit report JSON here");
  c_fit->add_option("--trace", fit.trace_path, "Write the optimizer trace CSV here");

  PredictArgs pred;
  CLI::App* c_pred = app.add_subcommand("predict", "Predict at the points of a CSV");
  c_pred->add_option("--model", pred.model, "Model bundle path")->required();
  c_pred->add_option("--data", pred.data, "Input CSV (y column optional)")->required();
  c_pred->add_option("--out", pred.out, "Output CSV path")->required();

  EvaluateArgs eval;
  CLI::App* c_eval = app.add_subcommand("evaluate", "Score a model on held-out data");
  c_eval->add_option("--model", eval.model, "Model bundle path");
  c_eval->add_option("--data", eval.data, "Test CSV (or the full CSV with --split)")->required();
  c_eval->add_option("--split", eval.split, "Training fraction for a seeded split");
  c_eval->add_option("--k", eval.fit.k, "Region count in split mode");
  c_eval->add_option("--b", eval.fit.b, "Pseudo observations per boundary in split mode");
  eval.fit.kernel.attach(c_eval);
  c_eval->add_flag("--optimize", eval.fit.optimize, "Optimize hyperparameters in split mode");
  c_eval->add_option("--budget", eval.fit.budget, "Likelihood evaluation budget");
  c_eval->add_option("--truth", eval.truth,
                     "Sidecar JSON with the generating kernel (default: <data>.json)");
  c_eval->add_option("--ti", eval.t_interior, "Interior benchmark points");
  c_eval->add_option("--tb", eval.t_boundary, "Boundary benchmark points");
  c_eval->add_option("--seed", eval.seed, "Random seed")->required();
  c_eval->add_option("--out", eval.out, "Report JSON path (default: stdout)");
  c_eval->add_option("--csv", eval.csv, "Append the report as one CSV row here");

  SweepArgs sweep;
  CLI::App* c_sweep = app.add_subcommand("sweep", "Run a (K, B, rho, d) grid over fresh data");
  c_sweep->add_option("--out", sweep.out, "Aggregated CSV path")->required();
  c_sweep->add_option("--n", sweep.n, "Samples per cell");
  c_sweep->add_option("--d", sweep.dims, "Input dimensions (comma list)")->delimiter(',');
  c_sweep->add_option("--rho", sweep.rhos, "Length scales (comma list)")->delimiter(',');
  c_sweep->add_option("--k", sweep.ks, "Region counts (comma list)")->delimiter(',');
  c_sweep->add_option("--b", sweep.bs, "Pseudo counts (comma list)")->delimiter(',');
  c_sweep->add_option("--replicates", sweep.replicates, "Replicates per cell");
  c_sweep->add_option("--kernel", sweep.kernel.family, "Covariance family: se or exp")
      ->check(CLI::IsMember({"se", "exp"}));
  c_sweep->add_option("--tau", sweep.kernel.tau, "Signal variance");
  c_sweep->add_option("--noise", sweep.kernel.noise, "Observation noise variance");
  c_sweep->add_option("--box-lo", sweep.box_lo, "Domain lower bound per axis");
  c_sweep->add_option("--box-hi", sweep.box_hi, "Domain upper bound per axis");
  c_sweep->add_flag("--optimize", sweep.optimize, "Optimize hyperparameters per cell");
  c_sweep->add_option("--budget", sweep.budget, "Likelihood evaluation budget");
  c_sweep->add_option("--ti", sweep.t_interior, "Interior benchmark points");
  c_sweep->add_option("--tb", sweep.t_boundary, "Boundary benchmark points");
  c_sweep->add_option("--seed", sweep.seed, "Random seed")->required();
  c_sweep->add_option("--jobs", sweep.jobs, "Parallel cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_fit->parsed()) return cmd_fit(fit);
    if (c_pred->parsed()) return cmd_predict(pred);
    if (c_eval->parsed()) return cmd_evaluate(eval);
    if (c_sweep->parsed()) return cmd_sweep(sweep);
  } catch (const CliFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
