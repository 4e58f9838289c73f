#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "hif/errors.hpp"

namespace hif {

struct ChartSeries {
  std::string label;
  std::vector<double> ys;
};

/// Static SVG line chart: series plotted against their index, auto-scaled
/// y axis, legend in the top-right corner.
inline std::string line_chart_svg(const std::string& title,
                                  const std::vector<ChartSeries>& series, int width = 720,
                                  int height = 420) {
  if (series.empty()) throw DataError("chart: no series");
  static const char* kColors[] = {"#1f6fb2", "#c23b22", "#2e8540", "#8031a7",
                                  "#b58900", "#00736d"};
  const double margin = 48.0;
  const double plot_w = width - 2 * margin;
  const double plot_h = height - 2 * margin;

  double ymin = 0.0, ymax = 1.0;
  std::size_t xmax = 1;
  bool any = false;
  for (const auto& s : series) {
    for (double y : s.ys) {
      if (!any) {
        ymin = ymax = y;
        any = true;
      }
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    xmax = std::max(xmax, s.ys.size() > 1 ? s.ys.size() - 1 : std::size_t{1});
  }
  if (!any) throw DataError("chart: all series empty");
  if (ymax == ymin) {
    ymax += 0.5;
    ymin -= 0.5;
  }

  auto sx = [&](double x) { return margin + plot_w * (x / static_cast<double>(xmax)); };
  auto sy = [&](double y) { return margin + plot_h * (1.0 - (y - ymin) / (ymax - ymin)); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">"
      << title << "</text>\n";
  // Axes.
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << margin + plot_h << "\" stroke=\"#333\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin + plot_h << "\" x2=\""
      << margin + plot_w << "\" y2=\"" << margin + plot_h << "\" stroke=\"#333\"/>\n";
  out << "<text x=\"" << margin - 6 << "\" y=\"" << sy(ymax) + 4
      << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << ymax
      << "</text>\n";
  out << "<text x=\"" << margin - 6 << "\" y=\"" << sy(ymin) + 4
      << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << ymin
      << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.ys.empty()) continue;
    const char* color = kColors[si % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.ys.size(); ++i) {
      out << sx(static_cast<double>(i)) << ',' << sy(s.ys[i]) << ' ';
    }
    out << "\"/>\n";
    const double ly = margin + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << margin + plot_w - 90 << "\" y1=\"" << ly << "\" x2=\""
        << margin + plot_w - 70 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << margin + plot_w - 64 << "\" y=\"" << ly + 4
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace hif
