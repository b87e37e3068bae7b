#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "csv.hpp"
#include "svg.hpp"

namespace densedyn::cli {

namespace fs = std::filesystem;

const std::vector<std::string>& plot_names() {
  static const std::vector<std::string> names = {"curve", "lld", "pca2d", "trajectory", "corr", "varmap"};
  return names;
}

namespace {

using Points = std::vector<std::pair<double, double>>;

struct Frame {
  double x, y, w, h;
  Scale sx, sy;
};

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::pair<double, double> range_of(const std::vector<double>& v, double pad_frac = 0.05) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : v)
    if (!std::isnan(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi == lo) return {lo - 0.5, hi + 0.5};
  const double pad = (hi - lo) * pad_frac;
  return {lo - pad, hi + pad};
}

Frame make_frame(double x, double y, double w, double h, std::pair<double, double> xr, std::pair<double, double> yr) {
  return {x, y, w, h, Scale{xr.first, xr.second, x, x + w}, Scale{yr.first, yr.second, y + h, y}};
}

void draw_axes(Svg& svg, const Frame& f, const std::string& title, const std::string& xlabel,
               const std::string& ylabel) {
  svg.rect(f.x, f.y, f.w, f.h, "none", "#444444");
  for (double t : nice_ticks(f.sx.d0, f.sx.d1)) {
    svg.line(f.sx(t), f.y + f.h, f.sx(t), f.y + f.h + 4, "#444444");
    svg.text(f.sx(t), f.y + f.h + 16, tick_label(t), 10, "middle");
  }
  for (double t : nice_ticks(f.sy.d0, f.sy.d1)) {
    svg.line(f.x - 4, f.sy(t), f.x, f.sy(t), "#444444");
    svg.text(f.x - 6, f.sy(t) + 3, tick_label(t), 10, "end");
  }
  svg.text(f.x + f.w / 2, f.y - 10, title, 13, "middle");
  svg.text(f.x + f.w / 2, f.y + f.h + 34, xlabel, 11, "middle");
  svg.text(f.x - 42, f.y + f.h / 2, ylabel, 11, "middle", -90);
}

Points series(const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys) {
  Points pts;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isnan(ys[i])) pts.emplace_back(f.sx(xs[i]), f.sy(ys[i]));
  return pts;
}

void legend(Svg& svg, double x, double y, const std::vector<std::pair<std::string, std::string>>& entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double yy = y + 14.0 * static_cast<double>(i);
    svg.rect(x, yy - 8, 10, 10, entries[i].second);
    svg.text(x + 14, yy + 1, entries[i].first, 10);
  }
}

std::string plot_curve(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "curve.csv");
  const auto epoch = t.numbers("epoch");
  Svg svg(640, 420);
  const Frame f = make_frame(70, 40, 520, 320, range_of(epoch, 0.0), {0.0, 1.0});
  draw_axes(svg, f, "Learning curve", "epoch", "accuracy");
  svg.polyline(series(f, epoch, t.numbers("accuracy")), palette(1), 2.0, "data");
  svg.polyline(series(f, epoch, t.numbers("heldout_accuracy")), palette(0), 1.5, "heldout", "4 3");
  legend(svg, f.x + f.w - 110, f.y + f.h - 30, {{"train", palette(1)}, {"held-out", palette(0)}});
  return svg.str();
}

std::string plot_lld(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "lld_curve.csv");
  const auto epoch = t.numbers("epoch");
  Svg svg(640, 420);
  const Frame f = make_frame(70, 40, 520, 320, range_of(epoch, 0.0), {0.0, 1.0});
  draw_axes(svg, f, "Logistic learning decomposition", "epoch", "accuracy");
  std::vector<std::pair<std::string, std::string>> keys = {{"accuracy", "#222222"}};
  svg.polyline(series(f, epoch, t.numbers("data")), "#222222", 2.0, "data");
  if (t.has_column("fit")) {
    svg.polyline(series(f, epoch, t.numbers("fit")), palette(1), 2.0, "fit", "6 3");
    keys.emplace_back("fit", palette(1));
    for (std::size_t c = 1;; ++c) {
      const std::string name = "component_" + std::to_string(c);
      if (!t.has_column(name)) break;
      svg.polyline(series(f, epoch, t.numbers(name)), palette(c + 1), 1.5, "component");
      keys.emplace_back("component " + std::to_string(c), palette(c + 1));
    }
  }
  legend(svg, f.x + f.w - 120, f.y + f.h - 14.0 * static_cast<double>(keys.size()) - 4, keys);
  return svg.str();
}

std::string plot_pca2d(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "pca2d.csv");
  const std::size_t ce = t.column("epoch"), cl = t.column("label"), c1 = t.column("pc1"), c2 = t.column("pc2");
  std::map<int, std::vector<std::size_t>> by_epoch;
  std::set<int> labels;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    by_epoch[static_cast<int>(t.number(r, ce))].push_back(r);
    labels.insert(static_cast<int>(t.number(r, cl)));
  }
  const double panel = 300.0, gap = 80.0;
  const double width = 60.0 + static_cast<double>(std::max<std::size_t>(by_epoch.size(), 1)) * (panel + gap);
  Svg svg(width, panel + 120);
  double x = 70.0;
  for (const auto& [epoch, rows] : by_epoch) {
    std::vector<double> xs, ys;
    for (std::size_t r : rows) {
      xs.push_back(t.number(r, c1));
      ys.push_back(t.number(r, c2));
    }
    const Frame f = make_frame(x, 40, panel, panel, range_of(xs), range_of(ys));
    draw_axes(svg, f, "Epoch " + std::to_string(epoch), "PC1", "PC2");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int label = static_cast<int>(t.number(rows[i], cl));
      svg.circle(f.sx(xs[i]), f.sy(ys[i]), 2.5, palette(static_cast<std::size_t>(label)),
                 "class" + std::to_string(label));
    }
    x += panel + gap;
  }
  std::vector<std::pair<std::string, std::string>> keys;
  for (int l : labels) keys.emplace_back("class " + std::to_string(l), palette(static_cast<std::size_t>(l)));
  legend(svg, width - gap + 8, 50, keys);
  return svg.str();
}

std::string plot_trajectory(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "pca_trajectory.csv");
  const CsvTable curve = read_csv(dir / "curve.csv");
  const std::size_t ce = t.column("epoch"), cp = t.column("pc"), cv = t.column("eigenvalue");
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_pc;
  std::vector<double> all;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto& s = by_pc[static_cast<int>(t.number(r, cp))];
    s.first.push_back(t.number(r, ce));
    s.second.push_back(t.number(r, cv));
    all.push_back(t.number(r, cv));
  }
  const auto epoch = curve.numbers("epoch");
  Svg svg(680, 420);
  auto yr = range_of(all);
  yr.first = std::min(yr.first, 0.0);
  const Frame f = make_frame(70, 40, 520, 320, range_of(epoch, 0.0), yr);
  draw_axes(svg, f, "Principal component trajectories", "epoch", "eigenvalue");
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& [pc, s] : by_pc) {
    svg.polyline(series(f, s.first, s.second), palette(static_cast<std::size_t>(pc - 1)), 1.8, "pc");
    keys.emplace_back("PC" + std::to_string(pc), palette(static_cast<std::size_t>(pc - 1)));
  }
  const Frame acc = make_frame(70, 40, 520, 320, range_of(epoch, 0.0), {0.0, 1.0});
  svg.polyline(series(acc, epoch, curve.numbers("accuracy")), "#222222", 1.5, "accuracy", "4 3");
  for (double v : nice_ticks(0.0, 1.0)) {
    svg.line(acc.x + acc.w, acc.sy(v), acc.x + acc.w + 4, acc.sy(v), "#444444");
    svg.text(acc.x + acc.w + 6, acc.sy(v) + 3, tick_label(v), 10);
  }
  svg.text(acc.x + acc.w + 40, acc.y + acc.h / 2, "accuracy", 11, "middle", 90);
  keys.emplace_back("accuracy", "#222222");
  legend(svg, f.x + 10, f.y + 14, keys);
  return svg.str();
}

std::string plot_corr(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "layer_corr.csv");
  const std::size_t ce = t.column("epoch"), ca = t.column("layer_a"), cb = t.column("layer_b"),
                    cv = t.column("activation");
  std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> pairs;
  std::vector<double> epochs;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto& s = pairs[{static_cast<int>(t.number(r, ca)), static_cast<int>(t.number(r, cb))}];
    s.first.push_back(t.number(r, ce));
    s.second.push_back(t.number(r, cv));
    epochs.push_back(t.number(r, ce));
  }
  Svg svg(680, 420);
  const Frame f = make_frame(70, 40, 480, 320, range_of(epochs, 0.0), {-1.0, 1.0});
  draw_axes(svg, f, "Conv layer correlation", "epoch", "mean Pearson r");
  std::vector<std::pair<std::string, std::string>> keys;
  std::size_t i = 0;
  for (const auto& [key, s] : pairs) {
    const std::string dash = key.second - key.first > 1 ? "4 3" : "";
    svg.polyline(series(f, s.first, s.second), palette(i), 1.5, "pair", dash);
    keys.emplace_back("L" + std::to_string(key.first) + "-L" + std::to_string(key.second), palette(i));
    ++i;
  }
  legend(svg, f.x + f.w + 14, f.y + 8, keys);
  return svg.str();
}

std::string plot_varmap(const fs::path& dir) {
  const fs::path maps = dir / "variance_maps";
  const CsvTable index = read_csv(maps / "index.csv");
  const std::size_t classes = index.rows.size();
  std::vector<std::vector<std::vector<double>>> grids;
  double peak = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    const CsvTable t = read_csv(maps / ("class_" + std::to_string(k) + ".csv"));
    const std::size_t h = t.rows.size(), w = t.header.size();
    const std::size_t step = std::max<std::size_t>(1, (std::max(h, w) + 63) / 64);
    std::vector<std::vector<double>> g((h + step - 1) / step, std::vector<double>((w + step - 1) / step, 0.0));
    std::vector<std::vector<double>> n = g;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        g[y / step][x / step] += t.number(y, x);
        n[y / step][x / step] += 1.0;
      }
    for (std::size_t y = 0; y < g.size(); ++y)
      for (std::size_t x = 0; x < g[y].size(); ++x) {
        g[y][x] /= n[y][x];
        peak = std::max(peak, g[y][x]);
      }
    grids.push_back(std::move(g));
  }
  const double panel = 192.0, gap = 24.0;
  Svg svg(40 + static_cast<double>(classes) * (panel + gap), panel + 110);
  for (std::size_t k = 0; k < classes; ++k) {
    const double x0 = 30 + static_cast<double>(k) * (panel + gap), y0 = 40;
    const auto& g = grids[k];
    const double cell = panel / static_cast<double>(std::max(g.size(), g.empty() ? 1 : g[0].size()));
    for (std::size_t y = 0; y < g.size(); ++y)
      for (std::size_t x = 0; x < g[y].size(); ++x)
        svg.rect(x0 + cell * static_cast<double>(x), y0 + cell * static_cast<double>(y), cell + 0.01,
                 cell + 0.01, heat_color(peak > 0 ? g[y][x] / peak : 0.0));
    svg.text(x0 + panel / 2, y0 - 10, index.rows[k].at(index.column("name")), 12, "middle");
  }
  for (int i = 0; i <= 20; ++i)
    svg.rect(30 + 10.0 * i, panel + 62, 10.01, 12, heat_color(i / 20.0));
  svg.text(30, panel + 90, "0", 10);
  svg.text(240, panel + 90, tick_label(peak), 10, "end");
  svg.text(250, panel + 72, "pixel variance", 10);
  return svg.str();
}

}  // namespace

std::string render_plot(const fs::path& analysis_dir, const std::string& which) {
  if (which == "curve") return plot_curve(analysis_dir);
  if (which == "lld") return plot_lld(analysis_dir);
  if (which == "pca2d") return plot_pca2d(analysis_dir);
  if (which == "trajectory") return plot_trajectory(analysis_dir);
  if (which == "corr") return plot_corr(analysis_dir);
  if (which == "varmap") return plot_varmap(analysis_dir);
  throw std::invalid_argument("unknown plot '" + which + "'");
}

}  // namespace densedyn::cli
