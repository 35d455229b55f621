#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace eos {

/// Formats a double with 17 significant digits (round-trip exact).
std::string fmt_g17(double x);

/// Row-oriented CSV writer. Missing values are written as empty fields.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void row(const std::vector<std::optional<double>>& values);
  void raw_row(const std::vector<std::string>& fields);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t width_;
};

struct CsvTable {
  std::vector<std::string> header;
  // cells[r][c]; empty string marks a missing field
  std::vector<std::vector<std::string>> cells;

  int column(const std::string& name) const;  // -1 if absent
  double num(std::size_t row, int col) const;
  bool empty_cell(std::size_t row, int col) const;
};

CsvTable read_csv(const std::string& path);

}  // namespace eos
