#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tfmbench/common.hpp"

namespace tfmbench {

/// Bare-bones line chart writer (vector output, no dependencies). Good
/// enough for metric-vs-proportion sweep plots.
class SvgLinePlot {
 public:
  SvgLinePlot(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)),
        x_label_(std::move(x_label)),
        y_label_(std::move(y_label)) {}

  void add_point(double x, double y) { points_.emplace_back(x, y); }

  void save(const std::filesystem::path& path) const {
    require(!points_.empty(), "svg plot '", title_, "': no points");
    auto pts = points_;
    std::sort(pts.begin(), pts.end());

    double x_min = pts.front().first, x_max = pts.back().first;
    double y_min = pts[0].second, y_max = pts[0].second;
    for (auto& [x, y] : pts) {
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) {
      y_min -= 0.05;
      y_max += 0.05;
    }

    const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    auto sx = [&](double x) {
      return ml + (x - x_min) / (x_max - x_min) * (w - ml - mr);
    };
    auto sy = [&](double y) {
      return h - mb - (y - y_min) / (y_max - y_min) * (h - mt - mb);
    };

    std::ofstream out(path);
    require(out.good(), path.string(), ": cannot open for writing");
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w
        << "' height='" << h << "' viewBox='0 0 " << w << " " << h << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << w / 2 << "' y='24' text-anchor='middle' "
        << "font-family='sans-serif' font-size='16'>" << title_ << "</text>\n";

    // axes
    out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr
        << "' y2='" << h - mb << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
        << h - mb << "' stroke='black'/>\n";

    for (int t = 0; t <= 4; ++t) {
      double xv = x_min + (x_max - x_min) * t / 4.0;
      double yv = y_min + (y_max - y_min) * t / 4.0;
      out << "<text x='" << sx(xv) << "' y='" << h - mb + 18
          << "' text-anchor='middle' font-family='sans-serif' "
             "font-size='11'>"
          << format_double(std::round(xv * 1000) / 1000) << "</text>\n";
      out << "<text x='" << ml - 8 << "' y='" << sy(yv) + 4
          << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
          << format_double(std::round(yv * 1000) / 1000) << "</text>\n";
      out << "<line x1='" << ml << "' y1='" << sy(yv) << "' x2='" << w - mr
          << "' y2='" << sy(yv) << "' stroke='#dddddd'/>\n";
    }

    out << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 12
        << "' text-anchor='middle' font-family='sans-serif' font-size='13'>"
        << x_label_ << "</text>\n";
    out << "<text x='16' y='" << (mt + h - mb) / 2
        << "' text-anchor='middle' font-family='sans-serif' font-size='13' "
        << "transform='rotate(-90 16," << (mt + h - mb) / 2 << ")'>"
        << y_label_ << "</text>\n";

    out << "<polyline fill='none' stroke='#1f77b4' stroke-width='2' points='";
    for (auto& [x, y] : pts) out << sx(x) << "," << sy(y) << " ";
    out << "'/>\n";
    for (auto& [x, y] : pts)
      out << "<circle cx='" << sx(x) << "' cy='" << sy(y)
          << "' r='3.5' fill='#1f77b4'/>\n";
    out << "</svg>\n";
    require(out.good(), path.string(), ": write failed");
  }

 private:
  std::string title_, x_label_, y_label_;
  std::vector<std::pair<double, double>> points_;
};

}  // namespace tfmbench
