#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "decorr/matrix.hpp"

namespace decorr {

/// Deterministic static SVG charts: fixed viewport, fixed palette, no
/// timestamps, so identical inputs render byte-identical files.
namespace svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 860;
  int height = 520;
};

namespace detail {

inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
inline constexpr int kPaletteSize = 8;

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct AxisScale {
  double lo = 0.0, hi = 1.0;
  double px0 = 0.0, px1 = 1.0;
  double to_px(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

inline AxisScale make_scale(double lo, double hi, double px0, double px1) {
  if (!(hi > lo)) {
    hi = lo + 1.0;
    lo = lo - 1.0;
  }
  double pad = 0.04 * (hi - lo);
  return {lo - pad, hi + pad, px0, px1};
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline void chart_frame(std::string& out, const ChartOptions& opt, const AxisScale& xs,
                        const AxisScale& ys) {
  out += "<rect x='0' y='0' width='" + std::to_string(opt.width) + "' height='" +
         std::to_string(opt.height) + "' fill='white'/>\n";
  out += "<text x='" + fmt(opt.width / 2.0) +
         "' y='24' text-anchor='middle' font-size='16' font-family='sans-serif'>" +
         escape(opt.title) + "</text>\n";
  // axes
  out += "<line x1='" + fmt(xs.px0) + "' y1='" + fmt(ys.px0) + "' x2='" + fmt(xs.px1) +
         "' y2='" + fmt(ys.px0) + "' stroke='black'/>\n";
  out += "<line x1='" + fmt(xs.px0) + "' y1='" + fmt(ys.px0) + "' x2='" + fmt(xs.px0) +
         "' y2='" + fmt(ys.px1) + "' stroke='black'/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    double xv = xs.lo + (xs.hi - xs.lo) * i / ticks;
    double xpx = xs.to_px(xv);
    out += "<line x1='" + fmt(xpx) + "' y1='" + fmt(ys.px0) + "' x2='" + fmt(xpx) +
           "' y2='" + fmt(ys.px0 + 5) + "' stroke='black'/>\n";
    out += "<text x='" + fmt(xpx) + "' y='" + fmt(ys.px0 + 20) +
           "' text-anchor='middle' font-size='11' font-family='sans-serif'>" +
           format_double(std::round(xv * 100.0) / 100.0) + "</text>\n";
    double yv = ys.lo + (ys.hi - ys.lo) * i / ticks;
    double ypx = ys.to_px(yv);
    out += "<line x1='" + fmt(xs.px0 - 5) + "' y1='" + fmt(ypx) + "' x2='" + fmt(xs.px0) +
           "' y2='" + fmt(ypx) + "' stroke='black'/>\n";
    out += "<text x='" + fmt(xs.px0 - 8) + "' y='" + fmt(ypx + 4) +
           "' text-anchor='end' font-size='11' font-family='sans-serif'>" +
           format_double(std::round(yv * 1000.0) / 1000.0) + "</text>\n";
  }
  out += "<text x='" + fmt((xs.px0 + xs.px1) / 2) + "' y='" + fmt(ys.px0 + 40) +
         "' text-anchor='middle' font-size='13' font-family='sans-serif'>" +
         escape(opt.x_label) + "</text>\n";
  out += "<text x='18' y='" + fmt((ys.px0 + ys.px1) / 2) +
         "' text-anchor='middle' font-size='13' font-family='sans-serif' transform='rotate(-90 18 " +
         fmt((ys.px0 + ys.px1) / 2) + ")'>" + escape(opt.y_label) + "</text>\n";
}

inline void legend(std::string& out, const std::vector<std::string>& labels, double x,
                   double y) {
  for (std::size_t s = 0; s < labels.size(); ++s) {
    double ly = y + 18.0 * static_cast<double>(s);
    out += "<rect x='" + fmt(x) + "' y='" + fmt(ly - 9) +
           "' width='12' height='12' fill='" + kPalette[s % kPaletteSize] + "'/>\n";
    out += "<text x='" + fmt(x + 18) + "' y='" + fmt(ly + 2) +
           "' font-size='12' font-family='sans-serif'>" + escape(labels[s]) + "</text>\n";
  }
}

}  // namespace detail

inline std::string render_line_chart(const std::vector<Series>& series,
                                     const ChartOptions& opt) {
  require(!series.empty(), "line chart: no series");
  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool first = true;
  for (const Series& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      if (first) {
        xlo = xhi = x;
        ylo = yhi = y;
        first = false;
      }
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  detail::AxisScale xs = detail::make_scale(xlo, xhi, 70, opt.width - 20);
  detail::AxisScale ys = detail::make_scale(ylo, yhi, opt.height - 60, 40);

  std::string out = "<svg xmlns='http://www.w3.org/2000/svg' width='" +
                    std::to_string(opt.width) + "' height='" + std::to_string(opt.height) +
                    "' viewBox='0 0 " + std::to_string(opt.width) + " " +
                    std::to_string(opt.height) + "'>\n";
  detail::chart_frame(out, opt, xs, ys);
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < series.size(); ++s) {
    labels.push_back(series[s].label);
    std::string path;
    bool pen_up = true;
    for (auto [x, y] : series[s].points) {
      if (!std::isfinite(y)) {
        pen_up = true;
        continue;
      }
      path += (pen_up ? "M" : "L") + detail::fmt(xs.to_px(x)) + " " + detail::fmt(ys.to_px(y));
      pen_up = false;
    }
    out += "<path d='" + path + "' fill='none' stroke='" +
           detail::kPalette[s % detail::kPaletteSize] + "' stroke-width='1.8'/>\n";
  }
  detail::legend(out, labels, xs.px0 + 12, 52);
  out += "</svg>\n";
  return out;
}

/// Grouped bars: one group per category, one bar per series.
inline std::string render_bar_chart(const std::vector<std::string>& categories,
                                    const std::vector<Series>& series,
                                    const ChartOptions& opt) {
  require(!series.empty() && !categories.empty(), "bar chart: empty input");
  double yhi = 0.0;
  for (const Series& s : series)
    for (auto [x, y] : s.points) yhi = std::max(yhi, y);
  detail::AxisScale xs{-0.5, static_cast<double>(categories.size()) - 0.5, 70.0,
                       static_cast<double>(opt.width - 20)};
  detail::AxisScale ys = detail::make_scale(0.0, yhi, opt.height - 60, 40);

  std::string out = "<svg xmlns='http://www.w3.org/2000/svg' width='" +
                    std::to_string(opt.width) + "' height='" + std::to_string(opt.height) +
                    "' viewBox='0 0 " + std::to_string(opt.width) + " " +
                    std::to_string(opt.height) + "'>\n";
  out += "<rect x='0' y='0' width='" + std::to_string(opt.width) + "' height='" +
         std::to_string(opt.height) + "' fill='white'/>\n";
  out += "<text x='" + detail::fmt(opt.width / 2.0) +
         "' y='24' text-anchor='middle' font-size='16' font-family='sans-serif'>" +
         detail::escape(opt.title) + "</text>\n";
  out += "<line x1='" + detail::fmt(xs.px0) + "' y1='" + detail::fmt(ys.px0) + "' x2='" +
         detail::fmt(xs.px1) + "' y2='" + detail::fmt(ys.px0) + "' stroke='black'/>\n";

  const double group_w = (xs.px1 - xs.px0) / static_cast<double>(categories.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    double gx = xs.px0 + group_w * static_cast<double>(c);
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].points.size()) continue;
      double v = series[s].points[c].second;
      if (!std::isfinite(v)) continue;
      double x = gx + group_w * 0.1 + bar_w * static_cast<double>(s);
      double ytop = ys.to_px(v);
      out += "<rect x='" + detail::fmt(x) + "' y='" + detail::fmt(ytop) + "' width='" +
             detail::fmt(bar_w) + "' height='" + detail::fmt(ys.px0 - ytop) + "' fill='" +
             detail::kPalette[s % detail::kPaletteSize] + "'/>\n";
    }
    out += "<text x='" + detail::fmt(gx + group_w / 2) + "' y='" + detail::fmt(ys.px0 + 20) +
           "' text-anchor='middle' font-size='12' font-family='sans-serif'>" +
           detail::escape(categories[c]) + "</text>\n";
  }
  std::vector<std::string> labels;
  for (const Series& s : series) labels.push_back(s.label);
  detail::legend(out, labels, xs.px0 + 12, 52);
  out += "</svg>\n";
  return out;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write svg: " + path);
  out << content;
}

}  // namespace svg
}  // namespace decorr
