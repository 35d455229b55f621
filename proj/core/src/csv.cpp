#include "eos/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "eos/errors.hpp"

namespace eos {

std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), width_(header.size()) {
  if (!out_) throw IoError("cannot open CSV for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::optional<double>>& values) {
  for (std::size_t i = 0; i < width_; ++i) {
    if (i) out_ << ',';
    if (i < values.size() && values[i]) out_ << fmt_g17(*values[i]);
  }
  out_ << '\n';
}

void CsvWriter::raw_row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < width_; ++i) {
    if (i) out_ << ',';
    if (i < fields.size()) out_ << fields[i];
  }
  out_ << '\n';
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

double CsvTable::num(std::size_t row, int col) const {
  // std::stod throws out_of_range on subnormals; strtod just returns them.
  const std::string& s = cells.at(row).at(static_cast<std::size_t>(col));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw IoError("CSV: not a number: '" + s + "'");
  return v;
}

bool CsvTable::empty_cell(std::size_t row, int col) const {
  return cells.at(row).at(static_cast<std::size_t>(col)).empty();
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV: " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) fields.push_back(cell);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      t.cells.push_back(std::move(fields));
    }
  }
  return t;
}

}  // namespace eos
