#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace densedyn::cli {

std::string fixed2(double v) {
  if (std::abs(v) < 0.005) v = 0.0;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

Svg::Svg(double width, double height) : width_(width), height_(height) {}

void Svg::polyline(const std::vector<std::pair<double, double>>& points, const std::string& stroke, double width,
                   const std::string& css_class, const std::string& dash) {
  body_ += "<polyline class=\"" + css_class + "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
           fixed2(width) + "\"";
  if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
  body_ += " points=\"";
  for (std::size_t i = 0; i < points.size(); ++i)
    body_ += (i ? " " : "") + fixed2(points[i].first) + "," + fixed2(points[i].second);
  body_ += "\"/>\n";
}

void Svg::line(double x1, double y1, double x2, double y2, const std::string& stroke, double width) {
  body_ += "<line x1=\"" + fixed2(x1) + "\" y1=\"" + fixed2(y1) + "\" x2=\"" + fixed2(x2) + "\" y2=\"" + fixed2(y2) +
           "\" stroke=\"" + stroke + "\" stroke-width=\"" + fixed2(width) + "\"/>\n";
}

void Svg::circle(double cx, double cy, double r, const std::string& fill, const std::string& css_class) {
  body_ += "<circle class=\"" + css_class + "\" cx=\"" + fixed2(cx) + "\" cy=\"" + fixed2(cy) + "\" r=\"" + fixed2(r) +
           "\" fill=\"" + fill + "\"/>\n";
}

void Svg::rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke) {
  body_ += "<rect x=\"" + fixed2(x) + "\" y=\"" + fixed2(y) + "\" width=\"" + fixed2(w) + "\" height=\"" + fixed2(h) +
           "\" fill=\"" + fill + "\"";
  if (!stroke.empty()) body_ += " stroke=\"" + stroke + "\"";
  body_ += "/>\n";
}

void Svg::text(double x, double y, const std::string& content, double size, const std::string& anchor,
               double rotate) {
  body_ += "<text x=\"" + fixed2(x) + "\" y=\"" + fixed2(y) + "\" font-size=\"" + fixed2(size) +
           "\" text-anchor=\"" + anchor + "\"";
  if (rotate != 0.0) body_ += " transform=\"rotate(" + fixed2(rotate) + " " + fixed2(x) + " " + fixed2(y) + ")\"";
  body_ += ">" + escape(content) + "</text>\n";
}

std::string Svg::str() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed2(width_) + "\" height=\"" + fixed2(height_) +
         "\" viewBox=\"0 0 " + fixed2(width_) + " " + fixed2(height_) +
         "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n" + body_ +
         "</svg>\n";
}

std::vector<double> nice_ticks(double lo, double hi, int count) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(count, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) ticks.push_back(t);
  return ticks;
}

std::string palette(std::size_t i) {
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

std::string heat_color(double t) {
  static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(std::isnan(t) ? 0.0 : t, 0.0, 1.0) * 4.0;
  const int i = std::min(static_cast<int>(t), 3);
  const double f = t - i;
  char buf[8];
  const auto mix = [&](int c) { return static_cast<int>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c]))); };
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(0), mix(1), mix(2));
  return buf;
}

}  // namespace densedyn::cli
