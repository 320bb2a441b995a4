#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

// End-to-end runs of the installed command-line tool.
#ifndef PATCHWORK_CLI_PATH
#error "PATCHWORK_CLI_PATH must point at the built binary"
#endif

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pk_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
  const std::string command = std::string(PATCHWORK_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

}  // namespace

TEST_CASE("cli: simulate writes a deterministic dataset with a sidecar") {
  TempDir dir;
  const std::string csv = dir.file("data.csv");
  const std::string args = "simulate --out " + csv +
                           " --n 200 --d 2 --kernel exp --tau 10 --rho 1 --noise 1 "
                           "--box-lo 0 --box-hi 6 --seed 4";
  REQUIRE(run(args) == 0);
  const std::string first = slurp(csv);
  CHECK(count_lines(first) == 201);
  CHECK(first.rfind("x1,x2,y,f_true\n", 0) == 0);
  CHECK(fs::exists(csv + ".json"));

  REQUIRE(run(args) == 0);
  CHECK(slurp(csv) == first);

  CHECK(run("simulate --out " + dir.file("zero.csv") + " --n 0 --d 1 --seed 1") == 2);
}

TEST_CASE("cli: fit fails loudly on schema problems") {
  TempDir dir;
  {
    std::ofstream os(dir.file("no_y.csv"));
    os << "x1,x2\n1,2\n3,4\n";
  }
  CHECK(run("fit --data " + dir.file("no_y.csv") + " --out " + dir.file("m.pk") + " --seed 1") ==
        2);

  {
    std::ofstream os(dir.file("broken.csv"));
    os << "x1,y\n1,2\noops,3\n";
  }
  CHECK(run("fit --data " + dir.file("broken.csv") + " --out " + dir.file("m.pk") + " --seed 1") ==
        2);

  CHECK(run("fit --data " + dir.file("missing.csv") + " --out " + dir.file("m.pk") +
            " --seed 1") == 2);
  CHECK(run("fit --frobnicate") == 2);
}

TEST_CASE("cli: fit is reproducible and predict emits one row per point") {
  TempDir dir;
  const std::string csv = dir.file("train.csv");
  REQUIRE(run("simulate --out " + csv + " --n 300 --d 2 --tau 10 --rho 1 --noise 1 --seed 11") ==
          0);

  const std::string fit_args = " --data " + csv +
                               " --k 4 --b 3 --kernel se --tau 10 --rho 1 --noise 1 --seed 21";
  REQUIRE(run("fit --out " + dir.file("a.pk") + fit_args) == 0);
  REQUIRE(run("fit --out " + dir.file("b.pk") + fit_args) == 0);
  CHECK(slurp(dir.file("a.pk")) == slurp(dir.file("b.pk")));

  REQUIRE(run("predict --model " + dir.file("a.pk") + " --data " + csv + " --out " +
              dir.file("pred.csv")) == 0);
  const std::string pred = slurp(dir.file("pred.csv"));
  CHECK(count_lines(pred) == 301);
  CHECK(pred.rfind("x1,x2,mean,variance,region\n", 0) == 0);
}

TEST_CASE("cli: fit log records the phase timings") {
  TempDir dir;
  const std::string csv = dir.file("train.csv");
  REQUIRE(run("simulate --out " + csv + " --n 250 --d 2 --tau 10 --rho 1 --noise 1 --seed 3") ==
          0);
  REQUIRE(run("fit --data " + csv + " --out " + dir.file("m.pk") +
              " --k 4 --b 2 --tau 10 --rho 1 --noise 1 --seed 5 --log " + dir.file("log.json")) ==
          0);
  const std::string log = slurp(dir.file("log.json"));
  CHECK(log.find("partition_seconds") != std::string::npos);
  CHECK(log.find("assembly_seconds") != std::string::npos);
  CHECK(log.find("factorization_seconds") != std::string::npos);
}

TEST_CASE("cli: optimizer trace lands in a csv") {
  TempDir dir;
  const std::string csv = dir.file("train.csv");
  REQUIRE(run("simulate --out " + csv + " --n 160 --d 1 --tau 10 --rho 1 --noise 1 --seed 13") ==
          0);
  REQUIRE(run("fit --data " + csv + " --out " + dir.file("m.pk") +
              " --k 2 --b 1 --tau 5 --rho 0.5 --noise 0.5 --optimize --budget 30 --seed 2 "
              "--trace " +
              dir.file("trace.csv")) == 0);
  const std::string trace = slurp(dir.file("trace.csv"));
  CHECK(trace.rfind("evaluation,log_tau,log_rho,log_noise,nl\n", 0) == 0);
  const int rows = count_lines(trace) - 1;
  CHECK(rows >= 4);
  CHECK(rows <= 30);
}

TEST_CASE("cli: evaluate on a perfect-prediction toy file reports zero error") {
  TempDir dir;
  const std::string train = dir.file("train.csv");
  REQUIRE(run("simulate --out " + train + " --n 240 --d 2 --tau 10 --rho 1 --noise 1 --seed 8") ==
          0);
  REQUIRE(run("fit --data " + train + " --out " + dir.file("m.pk") +
              " --k 2 --b 2 --tau 10 --rho 1 --noise 1 --seed 9") == 0);
  REQUIRE(run("predict --model " + dir.file("m.pk") + " --data " + train + " --out " +
              dir.file("pred.csv")) == 0);

  // rebuild a test file whose y column is the model's own mean
  {
    std::ifstream is(dir.file("pred.csv"));
    std::ofstream os(dir.file("perfect.csv"));
    std::string line;
    std::getline(is, line);
    os << "x1,x2,y\n";
    while (std::getline(is, line)) {
      std::stringstream ss(line);
      std::string x1, x2, mean;
      std::getline(ss, x1, ',');
      std::getline(ss, x2, ',');
      std::getline(ss, mean, ',');
      os << x1 << ',' << x2 << ',' << mean << "\n";
    }
  }
  REQUIRE(run("evaluate --model " + dir.file("m.pk") + " --data " + dir.file("perfect.csv") +
              " --seed 1 --out " + dir.file("report.json")) == 0);
  const std::string report = slurp(dir.file("report.json"));
  const auto pos = report.find("\"mse\"");
  REQUIRE(pos != std::string::npos);
  const double mse = std::stod(report.substr(pos + 6));
  CHECK(mse <= 1e-20);
}

TEST_CASE("cli: split evaluation is deterministic and writes csv rows") {
  TempDir dir;
  const std::string data = dir.file("all.csv");
  REQUIRE(run("simulate --out " + data + " --n 400 --d 2 --tau 10 --rho 1 --noise 1 --seed 77") ==
          0);
  const std::string args = "evaluate --data " + data +
                           " --split 0.9 --k 2 --b 3 --kernel se --tau 10 --rho 1 --noise 1 "
                           "--seed 31 --out ";
  REQUIRE(run(args + dir.file("r1.json") + " --csv " + dir.file("rows.csv")) == 0);
  REQUIRE(run(args + dir.file("r2.json") + " --csv " + dir.file("rows.csv")) == 0);

  // identical up to wall-clock noise
  const auto strip_timing = [](std::string text) {
    const auto pos = text.find("\"predict_seconds\"");
    REQUIRE(pos != std::string::npos);
    const auto end = text.find_first_of(",}\n", pos);
    text.erase(pos, end - pos);
    return text;
  };
  CHECK(strip_timing(slurp(dir.file("r1.json"))) == strip_timing(slurp(dir.file("r2.json"))));

  const std::string rows = slurp(dir.file("rows.csv"));
  CHECK(count_lines(rows) == 3);  // header + two appended reports
  CHECK(rows.rfind("t,t_i,t_b,", 0) == 0);

  // the sidecar of the simulated file enables the benchmark suite
  CHECK(slurp(dir.file("r1.json")).find("\"i_mse\": null") == std::string::npos);
}

TEST_CASE("cli: sweep shows interior accuracy improving with stitching") {
  TempDir dir;
  REQUIRE(run("sweep --out " + dir.file("trend.csv") +
              " --n 800 --d 2 --rho 1 --k 16,32 --b 0,5 --replicates 1 --tau 10 --noise 1 "
              "--ti 300 --tb 60 --seed 5") == 0);
  // header: n,d,rho,k,b,replicate,seed,i_mse,...
  std::ifstream is(dir.file("trend.csv"));
  std::string line;
  std::getline(is, line);
  std::map<std::pair<int, int>, double> i_mse;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() >= 8);
    i_mse[{std::stoi(fields[3]), std::stoi(fields[4])}] = std::stod(fields[7]);
  }
  REQUIRE(i_mse.size() == 4);
  CHECK(i_mse[{16, 5}] < i_mse[{16, 0}]);
  CHECK(i_mse[{32, 5}] < i_mse[{32, 0}]);
}

TEST_CASE("cli: sweep emits one row per cell and replicate") {
  TempDir dir;
  REQUIRE(run("sweep --out " + dir.file("sweep.csv") +
              " --n 260 --d 2 --rho 1 --k 2,4 --b 0,2 --replicates 2 --tau 10 --noise 1 "
              "--ti 50 --tb 20 --seed 19 --jobs 2") == 0);
  const std::string sweep = slurp(dir.file("sweep.csv"));
  CHECK(count_lines(sweep) == 1 + 2 * 2 * 2);
  CHECK(sweep.rfind("n,d,rho,k,b,replicate,seed,", 0) == 0);
  // no cell errors
  for (std::size_t pos = sweep.find('\n'); pos != std::string::npos;
       pos = sweep.find('\n', pos + 1)) {
    if (pos + 1 < sweep.size()) {
      const std::size_t end = sweep.find('\n', pos + 1);
      const std::string line = sweep.substr(pos + 1, end - pos - 1);
      if (!line.empty()) CHECK(line.back() == ',');
    }
  }
}
