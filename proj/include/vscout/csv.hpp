#pragma once

// Plain numeric CSV: one header row, one observation per line, decimal
// point, no thousands separators.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vscout/detectors.hpp"
#include "vscout/error.hpp"
#include "vscout/numerics.hpp"

namespace vscout {

// Malformed input file; the message names the offending row and column.
class InputError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw InputError("non-numeric or non-finite value '" + std::string(cell) + "' at row " + std::to_string(row) +
                     ", column " + std::to_string(col));
  }
  return v;
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

// Rows and columns in error messages are 1-based; row 1 is the header.
inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty CSV input");
  for (auto cell : detail::split_csv_line(line)) table.header.emplace_back(detail::trim(cell));
  const std::size_t width = table.header.size();

  std::vector<double> flat;
  std::size_t row = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != width) {
      throw InputError("ragged row " + std::to_string(row) + ": expected " + std::to_string(width) + " columns, found " +
                       std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < width; ++c) flat.push_back(detail::parse_cell(cells[c], row, c + 1));
    ++rows;
  }
  table.values.resize(static_cast<Index>(rows), static_cast<Index>(width));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) table.values(static_cast<Index>(r), static_cast<Index>(c)) = flat[r * width + c];
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in);
}

inline DataMatrix read_data_csv(const std::string& path) {
  CsvTable t = read_csv_file(path);
  try {
    return DataMatrix(std::move(t.values));
  } catch (const DegenerateInputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline Flags read_truth_csv(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  if (t.header.size() != 1 || t.header.front() != "label") throw InputError(path + ": expected a single 'label' column");
  Flags truth(static_cast<std::size_t>(t.values.rows()));
  for (Index i = 0; i < t.values.rows(); ++i) {
    const double v = t.values(i, 0);
    if (v != 0.0 && v != 1.0) throw InputError(path + ": label at row " + std::to_string(i + 2) + " is not 0/1");
    truth[static_cast<std::size_t>(i)] = v == 1.0 ? 1 : 0;
  }
  return truth;
}

// 17 significant digits: parsing the output recovers every double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_data_csv(std::ostream& out, const Matrix& x) {
  for (Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << 'x' << (j + 1);
  out << '\n';
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_double(x(i, j));
    out << '\n';
  }
}

inline void write_truth_csv(std::ostream& out, const Flags& truth) {
  out << "label\n";
  for (auto t : truth) out << (t ? 1 : 0) << '\n';
}

}  // namespace vscout
