#pragma once

#include <string>
#include <vector>

namespace eos {

/// Minimal SVG line plots. Renderers take data already materialized from CSV
/// files so plots can always be regenerated offline from the CSVs alone.
struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  std::string label;
  double stroke_width = 1.5;
  bool dashed = false;
};

struct PlotOptions {
  int width = 760;
  int height = 460;
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<double> vlines;        ///< vertical marker positions (data units)
  std::vector<std::string> vline_labels;
};

void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const PlotOptions& options);

/// Grid heatmap with printed cell values (used for the S_max grid).
void write_svg_heatmap(const std::string& path,
                       const std::vector<std::vector<double>>& values,
                       const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels,
                       const std::string& title);

}  // namespace eos
