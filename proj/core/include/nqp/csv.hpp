#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace nqp {

// 17 significant digits round-trip IEEE doubles exactly.
inline std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_row(const std::vector<double>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt_f64(values[i]);
  }
  out += '\n';
  return out;
}

// Numeric rows of a CSV document, skipping the header line.
inline std::vector<std::vector<double>> parse_csv_numeric(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace nqp
