#pragma once

// Dataset CSV handling for the command-line tool. The schema is
// header-driven: a required header row names the columns, the "y" column
// holds responses, an optional "f_true" column holds latent values, and
// every other column is a feature.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pkcli {

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::vector<std::string> feature_names;
  int64_t rows = 0;
  int dim = 0;
  std::vector<double> x;  // row-major rows x dim
  std::vector<double> y;
  std::vector<double> f_true;
  bool has_y = false;
  bool has_f_true = false;
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& field, int64_t line_no) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  double value = 0.0;
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end || begin == end) {
    throw CsvError("line " + std::to_string(line_no) + ": cannot parse '" + field +
                   "' as a number");
  }
  return value;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CsvError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(is, line)) throw CsvError("'" + path + "': missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  Dataset data;
  int y_col = -1;
  int f_col = -1;
  std::vector<int> feature_cols;
  const std::vector<std::string> header = split_line(line);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y") {
      y_col = static_cast<int>(c);
    } else if (header[c] == "f_true") {
      f_col = static_cast<int>(c);
    } else {
      feature_cols.push_back(static_cast<int>(c));
      data.feature_names.push_back(header[c]);
    }
  }
  if (feature_cols.empty()) throw CsvError("'" + path + "': no feature columns in header");
  data.dim = static_cast<int>(feature_cols.size());
  data.has_y = y_col >= 0;
  data.has_f_true = f_col >= 0;

  int64_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw CsvError("line " + std::to_string(line_no) + ": expected " +
                     std::to_string(header.size()) + " fields, got " +
                     std::to_string(fields.size()));
    }
    for (int c : feature_cols) {
      data.x.push_back(parse_double(fields[static_cast<std::size_t>(c)], line_no));
    }
    if (y_col >= 0) data.y.push_back(parse_double(fields[static_cast<std::size_t>(y_col)], line_no));
    if (f_col >= 0) {
      data.f_true.push_back(parse_double(fields[static_cast<std::size_t>(f_col)], line_no));
    }
    ++data.rows;
  }
  return data;
}

inline void format_double(std::string& out, double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  out += buffer;
}

inline void write_dataset(const std::string& path, int64_t rows, int dim, const double* x,
                          const double* y, const double* f_true) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CsvError("cannot open '" + path + "' for writing");
  std::string buffer;
  for (int j = 0; j < dim; ++j) buffer += "x" + std::to_string(j + 1) + ",";
  buffer += "y";
  if (f_true != nullptr) buffer += ",f_true";
  buffer += "\n";
  for (int64_t i = 0; i < rows; ++i) {
    for (int j = 0; j < dim; ++j) {
      format_double(buffer, x[i * dim + j]);
      buffer += ",";
    }
    format_double(buffer, y[i]);
    if (f_true != nullptr) {
      buffer += ",";
      format_double(buffer, f_true[i]);
    }
    buffer += "\n";
  }
  os << buffer;
  if (!os) throw CsvError("write to '" + path + "' failed");
}

}  // namespace pkcli
