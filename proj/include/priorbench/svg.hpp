#pragma once

// Minimal static SVG charts: axes with ticks, line or point series, legend.
// Output is a pure function of the inputs.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "priorbench/synth_data.hpp"

namespace priorbench {

struct ChartSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
  bool line = true;     // polyline when true, circles otherwise
  bool dashed = false;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ChartSeries> series;
  int width = 720;
  int height = 440;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

// Fixed-precision coordinates keep files small and stable.
inline std::string coord(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), std::round(v * 100.0) / 100.0, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

inline std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return colors[i % 6];
}

}  // namespace detail

inline std::string render_chart(const ChartSpec& spec) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : spec.series) {
    if (s.xs.size() != s.ys.size()) throw ContractError("chart series '" + s.label + "': x/y length mismatch");
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      x0 = std::min(x0, s.xs[i]);
      x1 = std::max(x1, s.xs[i]);
      y0 = std::min(y0, s.ys[i]);
      y1 = std::max(y1, s.ys[i]);
    }
  }
  if (x0 > x1) {
    x0 = y0 = 0.0;
    x1 = y1 = 1.0;
  }
  if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
  if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 70, right = 170, top = 40, bottom = 55;
  const double pw = spec.width - left - right;
  const double ph = spec.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  using detail::coord;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + coord(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::xml_escape(spec.title) + "</text>\n";
  svg += "<rect x=\"" + coord(left) + "\" y=\"" + coord(top) + "\" width=\"" + coord(pw) + "\" height=\"" +
         coord(ph) + "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double t : detail::nice_ticks(x0, x1)) {
    svg += "<line x1=\"" + coord(px(t)) + "\" y1=\"" + coord(top + ph) + "\" x2=\"" + coord(px(t)) + "\" y2=\"" +
           coord(top + ph + 5) + "\" stroke=\"#333\"/>";
    svg += "<text x=\"" + coord(px(t)) + "\" y=\"" + coord(top + ph + 18) + "\" text-anchor=\"middle\">" +
           format_double(t) + "</text>\n";
  }
  for (double t : detail::nice_ticks(y0, y1)) {
    svg += "<line x1=\"" + coord(left - 5) + "\" y1=\"" + coord(py(t)) + "\" x2=\"" + coord(left) + "\" y2=\"" +
           coord(py(t)) + "\" stroke=\"#333\"/>";
    svg += "<text x=\"" + coord(left - 8) + "\" y=\"" + coord(py(t) + 4) + "\" text-anchor=\"end\">" +
           format_double(t) + "</text>\n";
  }
  svg += "<text x=\"" + coord(left + pw / 2) + "\" y=\"" + coord(spec.height - 12.0) +
         "\" text-anchor=\"middle\">" + detail::xml_escape(spec.x_label) + "</text>\n";
  svg += "<text transform=\"translate(16," + coord(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::xml_escape(spec.y_label) + "</text>\n";

  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const char* color = detail::palette(si);
    if (s.line) {
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\"";
      if (s.dashed) svg += " stroke-dasharray=\"5,3\"";
      svg += " points=\"";
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.ys[i])) continue;
        svg += coord(px(s.xs[i])) + "," + coord(py(s.ys[i])) + " ";
      }
      svg += "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        if (!std::isfinite(s.ys[i])) continue;
        svg += "<circle cx=\"" + coord(px(s.xs[i])) + "\" cy=\"" + coord(py(s.ys[i])) + "\" r=\"3.5\" fill=\"" +
               color + "\"/>";
      }
      svg += "\n";
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(si);
    const double lx = left + pw + 12;
    svg += "<line x1=\"" + coord(lx) + "\" y1=\"" + coord(ly) + "\" x2=\"" + coord(lx + 20) + "\" y2=\"" +
           coord(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
           (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>";
    svg += "<text x=\"" + coord(lx + 26) + "\" y=\"" + coord(ly + 4) + "\">" + detail::xml_escape(s.label) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace priorbench
