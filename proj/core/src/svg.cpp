#include "eqco/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <utility>
#include <vector>

#include "eqco/errors.hpp"

namespace eqco {
namespace {

constexpr int kWidth = 800;
constexpr int kHeight = 500;
constexpr double kLeft = 80.0;
constexpr double kRight = 640.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 430.0;
constexpr int kTicks = 10;
constexpr const char* kPalette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::pair<double, double> padded_range(double lo, double hi) {
  if (lo == hi) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.05;
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

}  // namespace

std::string render_svg(const CsvLog& csv, const ChartSpec& spec) {
  const std::size_t xi = csv.column_index(spec.x_column);
  const std::size_t yi = csv.column_index(spec.y_column);
  const bool split = !spec.series_column.empty();
  const std::size_t si = split ? csv.column_index(spec.series_column) : 0;

  std::vector<Series> series;
  for (const auto& row : csv.rows()) {
    double x = 0.0, y = 0.0;
    if (!parse_real(row[xi], x) || !parse_real(row[yi], y)) continue;
    const std::string name = split ? row[si] : spec.y_column;
    auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == name; });
    if (it == series.end()) {
      series.push_back({name, {}});
      it = series.end() - 1;
    }
    it->points.emplace_back(x, y);
  }

  const std::string x_label = spec.x_label.empty() ? spec.x_column : spec.x_label;
  const std::string y_label = spec.y_label.empty() ? spec.y_column : spec.y_label;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " + std::to_string(kWidth) +
         " " + std::to_string(kHeight) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
  out += "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         escape_xml(spec.title) + "</text>\n";
  // Axes.
  out += "<line x1=\"80\" y1=\"430\" x2=\"640\" y2=\"430\" stroke=\"black\"/>\n";
  out += "<line x1=\"80\" y1=\"50\" x2=\"80\" y2=\"430\" stroke=\"black\"/>\n";
  out += "<text x=\"360\" y=\"478\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         escape_xml(x_label) + "</text>\n";
  out += "<text x=\"20\" y=\"240\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 20 240)\">" +
         escape_xml(y_label) + "</text>\n";

  if (series.empty()) {
    out += "<text x=\"360\" y=\"240\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\" fill=\"#7f7f7f\">no data</text>\n";
    out += "</svg>\n";
    return out;
  }

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  std::tie(x_lo, x_hi) = padded_range(x_lo, x_hi);
  std::tie(y_lo, y_hi) = padded_range(y_lo, y_hi);
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * (kRight - kLeft); };
  auto py = [&](double y) { return kBottom - (y - y_lo) / (y_hi - y_lo) * (kBottom - kTop); };

  for (int t = 0; t <= kTicks; ++t) {
    const double fx = x_lo + (x_hi - x_lo) * t / kTicks;
    const double fy = y_lo + (y_hi - y_lo) * t / kTicks;
    const std::string sx = fmt("%.2f", px(fx));
    const std::string sy = fmt("%.2f", py(fy));
    out += "<line x1=\"" + sx + "\" y1=\"430\" x2=\"" + sx + "\" y2=\"436\" stroke=\"black\"/>\n";
    out += "<text x=\"" + sx + "\" y=\"450\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
           fmt("%.4g", fx) + "</text>\n";
    out += "<line x1=\"74\" y1=\"" + sy + "\" x2=\"80\" y2=\"" + sy + "\" stroke=\"black\"/>\n";
    out += "<text x=\"70\" y=\"" + sy + "\" text-anchor=\"end\" dominant-baseline=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"10\">" +
           fmt("%.4g", fy) + "</text>\n";
  }

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % 8];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t p = 0; p < series[i].points.size(); ++p) {
      if (p > 0) out += ' ';
      out += fmt("%.2f", px(series[i].points[p].first)) + "," + fmt("%.2f", py(series[i].points[p].second));
    }
    out += "\"/>\n";
    const double ly = kTop + 18.0 * static_cast<double>(i);
    out += "<line x1=\"655\" y1=\"" + fmt("%.2f", ly) + "\" x2=\"675\" y2=\"" + fmt("%.2f", ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"680\" y=\"" + fmt("%.2f", ly) + "\" dominant-baseline=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"11\">" +
           escape_xml(split ? spec.series_column + "=" + series[i].name : series[i].name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace eqco
