#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace densedyn::cli {

/// Minimal SVG builder. Coordinates are printed with two decimals so output bytes are stable.
class Svg {
 public:
  Svg(double width, double height);

  void polyline(const std::vector<std::pair<double, double>>& points, const std::string& stroke, double width,
                const std::string& css_class, const std::string& dash = {});
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0);
  void circle(double cx, double cy, double r, const std::string& fill, const std::string& css_class);
  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = {});
  /// anchor: start | middle | end
  void text(double x, double y, const std::string& content, double size = 11.0, const std::string& anchor = "start",
            double rotate = 0.0);

  std::string str() const;

 private:
  double width_;
  double height_;
  std::string body_;
};

/// Linear map from a data range onto a pixel range.
struct Scale {
  double d0 = 0.0, d1 = 1.0, p0 = 0.0, p1 = 1.0;
  double operator()(double v) const { return d1 == d0 ? (p0 + p1) / 2 : p0 + (v - d0) * (p1 - p0) / (d1 - d0); }
};

/// Up to ~`count` round tick values covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int count = 5);

/// Categorical color for class or series `i`.
std::string palette(std::size_t i);

/// Sequential colormap for t in [0, 1].
std::string heat_color(double t);

std::string fixed2(double v);

}  // namespace densedyn::cli
