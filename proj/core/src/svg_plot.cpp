#include "eos/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "eos/errors.hpp"

namespace eos {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Extent {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    } else {
      const double m = 0.05 * (hi - lo);
      lo -= m;
      hi += m;
    }
  }
};

}  // namespace

void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const PlotOptions& opt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open SVG for writing: " + path);

  const double ml = 64, mr = 16, mt = opt.title.empty() ? 16 : 36, mb = 44;
  const double pw = opt.width - ml - mr;
  const double ph = opt.height - mt - mb;

  const auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
  Extent ex, ey;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      ex.add(tx(s.x[i]));
      ey.add(s.y[i]);
    }
  for (double v : opt.vlines) ex.add(tx(v));
  ex.pad();
  ey.pad();

  const auto px = [&](double v) { return ml + (tx(v) - ex.lo) / (ex.hi - ex.lo) * pw; };
  const auto py = [&](double v) { return mt + (ey.hi - v) / (ey.hi - ey.lo) * ph; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width
      << "\" height=\"" << opt.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    out << "<text x=\"" << opt.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << opt.title
        << "</text>\n";

  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";

  // axis extremes
  const auto xline = [&](double fx, const std::string& text) {
    out << "<text x=\"" << fx << "\" y=\"" << mt + ph + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << text << "</text>\n";
  };
  const double x_lo = opt.log_x ? std::pow(10.0, ex.lo) : ex.lo;
  const double x_hi = opt.log_x ? std::pow(10.0, ex.hi) : ex.hi;
  xline(ml, num(x_lo));
  xline(ml + pw, num(x_hi));
  out << "<text x=\"" << ml - 8 << "\" y=\"" << mt + ph
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << num(ey.lo) << "</text>\n";
  out << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 10
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << num(ey.hi) << "</text>\n";
  if (!opt.x_label.empty())
    xline(ml + pw / 2, opt.x_label);
  if (!opt.y_label.empty())
    out << "<text x=\"14\" y=\"" << mt + ph / 2
        << "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
        << mt + ph / 2 << ")\" text-anchor=\"middle\">" << opt.y_label
        << "</text>\n";

  for (std::size_t i = 0; i < opt.vlines.size(); ++i) {
    const double x = px(opt.vlines[i]);
    out << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\""
        << mt + ph << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    if (i < opt.vline_labels.size())
      out << "<text x=\"" << x + 3 << "\" y=\"" << mt + 12
          << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#666\">"
          << opt.vline_labels[i] << "</text>\n";
  }

  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\""
        << s.stroke_width << "\"";
    if (s.dashed) out << " stroke-dasharray=\"5 4\"";
    out << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      out << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    out << "\"/>\n";
  }

  double ly = mt + 14;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    out << "<line x1=\"" << ml + pw - 130 << "\" y1=\"" << ly - 4 << "\" x2=\""
        << ml + pw - 110 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << ml + pw - 104 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
        << "</text>\n";
    ly += 15;
  }
  out << "</svg>\n";
}

void write_svg_heatmap(const std::string& path,
                       const std::vector<std::vector<double>>& values,
                       const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels,
                       const std::string& title) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open SVG for writing: " + path);

  const std::size_t nr = values.size();
  const std::size_t nc = nr ? values.front().size() : 0;
  const double cell = 84, ml = 100, mt = 56;
  const double w = ml + cell * static_cast<double>(nc) + 20;
  const double h = mt + cell * static_cast<double>(nr) + 20;

  Extent e;
  for (const auto& row : values)
    for (double v : row) e.add(v);
  if (!(e.hi > e.lo)) e.hi = e.lo + 1.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

  for (std::size_t c = 0; c < col_labels.size() && c < nc; ++c)
    out << "<text x=\"" << ml + cell * (static_cast<double>(c) + 0.5) << "\" y=\""
        << mt - 8 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << col_labels[c] << "</text>\n";

  for (std::size_t r = 0; r < nr; ++r) {
    if (r < row_labels.size())
      out << "<text x=\"" << ml - 8 << "\" y=\""
          << mt + cell * (static_cast<double>(r) + 0.55)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
          << row_labels[r] << "</text>\n";
    for (std::size_t c = 0; c < nc; ++c) {
      const double v = values[r][c];
      double t = std::isfinite(v) ? (v - e.lo) / (e.hi - e.lo) : 0.0;
      const int red = static_cast<int>(40 + 200 * t);
      const int blue = static_cast<int>(240 - 200 * t);
      out << "<rect x=\"" << ml + cell * static_cast<double>(c) << "\" y=\""
          << mt + cell * static_cast<double>(r) << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << red << ",80," << blue
          << ")\" stroke=\"white\"/>\n";
      out << "<text x=\"" << ml + cell * (static_cast<double>(c) + 0.5) << "\" y=\""
          << mt + cell * (static_cast<double>(r) + 0.55)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          << "font-size=\"11\" fill=\"white\">"
          << (std::isfinite(v) ? num(v) : std::string("n/a")) << "</text>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace eos
