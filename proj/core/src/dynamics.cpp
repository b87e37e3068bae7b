#include "densedyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace densedyn {

namespace {

double dot_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const std::size_t d = a.dim(1);
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += a[i * d + k] * b[j * d + k];
  return s;
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t num_classes, const char* what) {
  if (labels.size() != rows) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(rows) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw std::invalid_argument(std::string(what) + ": label " + std::to_string(l) + " out of range");
    }
  }
}

std::vector<double> class_means(std::span<const double> scores, std::size_t stride, std::size_t col,
                                std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> sum(num_classes, 0.0);
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    sum[static_cast<std::size_t>(labels[r])] += scores[r * stride + col];
    ++count[static_cast<std::size_t>(labels[r])];
  }
  for (std::size_t k = 0; k < num_classes; ++k) sum[k] = count[k] > 0 ? sum[k] / static_cast<double>(count[k]) : 0.0;
  return sum;
}

bool constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

}  // namespace

PcaResult pca_hidden(const EpochTrace& trace, std::size_t n_components) {
  if (trace.hidden_probe.empty()) throw std::invalid_argument("pca_hidden: epoch has no hidden probe block");
  return pca(trace.hidden_probe, n_components);
}

PcTrajectory pc_trajectory(std::span<const Tensor> hidden, std::span<const int> epochs, std::span<const int> labels,
                           std::size_t num_classes, const PcTrajectoryOptions& options) {
  if (hidden.size() < 2) throw std::invalid_argument("pc_trajectory: need at least 2 epochs");
  if (epochs.size() != hidden.size()) throw std::invalid_argument("pc_trajectory: epoch list length mismatch");
  const std::size_t n = options.n_components;
  PcTrajectory out;
  out.epochs.assign(epochs.begin(), epochs.end());
  out.n_components = n;
  out.num_classes = num_classes;

  if (options.alignment == AxisAlignment::kFixedBasis) {
    const PcaResult basis = pca(hidden.back(), n, PcaOptions{.require_rank = false});
    for (const Tensor& h : hidden) {
      require_rank(h, 2, "pc_trajectory hidden");
      check_labels(labels, h.dim(0), num_classes, "pc_trajectory");
      const std::size_t p = h.dim(0), d = h.dim(1);
      if (d != basis.axes.dim(1)) throw ShapeError("pc_trajectory: hidden width changes across epochs");
      std::vector<double> mean(d, 0.0);
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += h[r * d + j];
      }
      double total = 0.0;
      for (auto& m : mean) m /= static_cast<double>(p);
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t j = 0; j < d; ++j) total += (h[r * d + j] - mean[j]) * (h[r * d + j] - mean[j]);
      }
      total /= static_cast<double>(p - 1);
      std::vector<double> scores(p * n, 0.0);
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j) s += (h[r * d + j] - mean[j]) * basis.axes[c * d + j];
          scores[r * n + c] = s;
        }
      }
      std::vector<double> ev(n), frac(n);
      std::vector<std::vector<double>> cms(n);
      for (std::size_t c = 0; c < n; ++c) {
        double ss = 0.0;
        for (std::size_t r = 0; r < p; ++r) ss += scores[r * n + c] * scores[r * n + c];
        ev[c] = ss / static_cast<double>(p - 1);
        frac[c] = total > 0.0 ? ev[c] / total : 0.0;
        cms[c] = class_means(scores, n, c, labels, num_classes);
      }
      out.eigenvalue.push_back(ev);
      out.variance_fraction.push_back(frac);
      out.alignment_dot.emplace_back(n, 1.0);
      out.class_mean_score.push_back(cms);
      std::vector<std::size_t> ranks(n);
      for (std::size_t c = 0; c < n; ++c) ranks[c] = c;
      out.source_rank.push_back(ranks);
    }
    return out;
  }

  Tensor prev_axes;
  for (std::size_t e = 0; e < hidden.size(); ++e) {
    check_labels(labels, hidden[e].dim(0), num_classes, "pc_trajectory");
    const PcaResult res = pca(hidden[e], n, PcaOptions{.require_rank = false});
    const std::size_t d = res.axes.dim(1);
    std::vector<std::size_t> source(n);
    std::vector<double> sign(n, 1.0), dots(n, 1.0);
    for (std::size_t c = 0; c < n; ++c) source[c] = c;

    if (e > 0) {
      if (prev_axes.dim(1) != d) throw ShapeError("pc_trajectory: hidden width changes across epochs");
      std::vector<double> m(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m[i * n + j] = dot_rows(prev_axes, i, res.axes, j);
      }
      if (options.alignment == AxisAlignment::kMatch) {
        std::vector<bool> slot_used(n, false), axis_used(n, false);
        for (std::size_t step = 0; step < n; ++step) {
          std::size_t bi = n, bj = n;
          double best = -1.0;
          for (std::size_t i = 0; i < n; ++i) {
            if (slot_used[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
              if (axis_used[j]) continue;
              if (std::abs(m[i * n + j]) > best) {
                best = std::abs(m[i * n + j]);
                bi = i;
                bj = j;
              }
            }
          }
          slot_used[bi] = axis_used[bj] = true;
          source[bi] = bj;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double dp = m[i * n + source[i]];
        sign[i] = dp < 0.0 ? -1.0 : 1.0;
        dots[i] = sign[i] * dp;
      }
    }

    Tensor aligned({n, d});
    std::vector<double> ev(n), frac(n), scores(res.scores.dim(0) * n);
    const std::size_t p = res.scores.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = source[i];
      for (std::size_t k = 0; k < d; ++k) aligned[i * d + k] = sign[i] * res.axes[j * d + k];
      for (std::size_t r = 0; r < p; ++r) scores[r * n + i] = sign[i] * res.scores[r * n + j];
      ev[i] = res.eigenvalues[j];
      frac[i] = res.variance_explained[j];
    }
    std::vector<std::vector<double>> cms(n);
    for (std::size_t i = 0; i < n; ++i) cms[i] = class_means(scores, n, i, labels, num_classes);
    out.eigenvalue.push_back(ev);
    out.variance_fraction.push_back(frac);
    out.alignment_dot.push_back(dots);
    out.class_mean_score.push_back(cms);
    out.source_rank.push_back(source);
    prev_axes = std::move(aligned);
  }
  return out;
}

double lda_accuracy_2d(std::span<const std::array<double, 2>> points, std::span<const int> labels,
                       std::size_t num_classes) {
  check_labels(labels, points.size(), num_classes, "lda_accuracy_2d");
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("lda_accuracy_2d: no points");
  std::vector<std::array<double, 2>> mean(num_classes, {0.0, 0.0});
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    mean[k][0] += points[i][0];
    mean[k][1] += points[i][1];
    ++count[k];
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (count[k] == 0) continue;
    mean[k][0] /= static_cast<double>(count[k]);
    mean[k][1] /= static_cast<double>(count[k]);
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = mean[static_cast<std::size_t>(labels[i])];
    const double dx = points[i][0] - m[0], dy = points[i][1] - m[1];
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  std::size_t present = 0;
  for (auto c : count) present += c > 0 ? 1 : 0;
  const double dof = n > present ? static_cast<double>(n - present) : static_cast<double>(n);
  sxx /= dof;
  sxy /= dof;
  syy /= dof;
  const double ridge = 1e-9 * 0.5 * (sxx + syy) + 1e-12;
  sxx += ridge;
  syy += ridge;
  const double det = sxx * syy - sxy * sxy;
  const double ixx = syy / det, ixy = -sxy / det, iyy = sxx / det;

  std::vector<double> bias(num_classes), wx(num_classes), wy(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (count[k] == 0) continue;
    wx[k] = ixx * mean[k][0] + ixy * mean[k][1];
    wy[k] = ixy * mean[k][0] + iyy * mean[k][1];
    bias[k] = -0.5 * (mean[k][0] * wx[k] + mean[k][1] * wy[k]) +
              std::log(static_cast<double>(count[k]) / static_cast<double>(n));
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int best = -1;
    double best_score = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (count[k] == 0) continue;
      const double s = points[i][0] * wx[k] + points[i][1] * wy[k] + bias[k];
      if (best < 0 || s > best_score) {
        best = static_cast<int>(k);
        best_score = s;
      }
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

Projection2d project_2d(const Tensor& hidden, std::span<const int> labels, std::size_t num_classes) {
  require_rank(hidden, 2, "project_2d hidden");
  check_labels(labels, hidden.dim(0), num_classes, "project_2d");
  const PcaResult res = pca(hidden, 2, PcaOptions{.require_rank = false});
  Projection2d out;
  out.labels.assign(labels.begin(), labels.end());
  for (std::size_t r = 0; r < hidden.dim(0); ++r) out.points.push_back({res.scores[r * 2], res.scores[r * 2 + 1]});
  out.variance_explained = {res.variance_explained[0], res.variance_explained[1]};
  out.separation = lda_accuracy_2d(out.points, labels, num_classes);
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2 || constant(x) || constant(y)) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrMatrix layer_pair_correlation(std::span<const Tensor> conv) {
  const std::size_t layers = conv.size();
  if (layers == 0) throw std::invalid_argument("layer_pair_correlation: no conv probe blocks");
  const std::size_t p = conv[0].rank() > 0 ? conv[0].dim(0) : 0;
  const std::size_t width = p > 0 ? conv[0].size() / p : 0;
  for (const Tensor& t : conv) {
    if (t.rank() == 0 || t.dim(0) != p || t.size() != p * width) {
      throw ShapeError("layer_pair_correlation: conv blocks differ in shape: " + shape_to_string(conv[0].shape()) +
                       " vs " + shape_to_string(t.shape()));
    }
  }
  auto row = [&](std::size_t l, std::size_t e) { return conv[l].data().subspan(e * width, width); };

  CorrMatrix out(layers * layers);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t e = 0; e < p; ++e) {
      if (width >= 2 && !constant(row(l, e))) {
        out[l * layers + l] = 1.0;
        break;
      }
    }
    for (std::size_t m = l + 1; m < layers; ++m) {
      double sum = 0.0;
      std::size_t defined = 0;
      for (std::size_t e = 0; e < p; ++e) {
        if (const auto r = pearson(row(l, e), row(m, e))) {
          sum += *r;
          ++defined;
        }
      }
      if (defined > 0) {
        out[l * layers + m] = sum / static_cast<double>(defined);
        out[m * layers + l] = out[l * layers + m];
      }
    }
  }
  return out;
}

CorrMatrix weight_pair_correlation(const Tensor& weights) {
  require_rank(weights, 2, "weight_pair_correlation");
  const std::size_t layers = weights.dim(0), width = weights.dim(1);
  CorrMatrix out(layers * layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const auto a = weights.data().subspan(l * width, width);
    if (width >= 2 && !constant(a)) out[l * layers + l] = 1.0;
    for (std::size_t m = l + 1; m < layers; ++m) {
      out[l * layers + m] = pearson(a, weights.data().subspan(m * width, width));
      out[m * layers + l] = out[l * layers + m];
    }
  }
  return out;
}

Tensor pixel_variance_map(const DenseDataset& dataset, int label) {
  std::vector<const Tensor*> members;
  for (const auto& ex : dataset.exemplars) {
    if (ex.label == label) members.push_back(&ex.gray);
  }
  if (members.empty()) throw std::invalid_argument("pixel_variance_map: class " + std::to_string(label) + " is empty");
  const Shape shape = members.front()->shape();
  for (const Tensor* t : members) require_shape(*t, shape, "pixel_variance_map exemplar");
  // Deviations from the first member keep identical exemplars exactly zero.
  const std::size_t n = members.size(), size = members.front()->size();
  const Tensor& ref = *members.front();
  Tensor mean(shape), var(shape);
  for (const Tensor* t : members) {
    for (std::size_t i = 0; i < size; ++i) mean[i] += (*t)[i] - ref[i];
  }
  for (std::size_t i = 0; i < size; ++i) mean[i] /= static_cast<double>(n);
  for (const Tensor* t : members) {
    for (std::size_t i = 0; i < size; ++i) {
      const double d = (*t)[i] - ref[i] - mean[i];
      var[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < size; ++i) var[i] /= static_cast<double>(n);
  return var;
}

Crystallization detect_crystallization(std::span<const std::vector<double>> recall, std::span<const int> epochs,
                                       double theta, int window) {
  if (window < 1) throw std::invalid_argument("detect_crystallization: window must be at least 1");
  if (recall.size() != epochs.size()) throw std::invalid_argument("detect_crystallization: epoch list length mismatch");
  const std::size_t k = recall.empty() ? 0 : recall.front().size();
  for (const auto& r : recall) {
    if (r.size() != k) throw std::invalid_argument("detect_crystallization: ragged recall table");
  }
  const auto w = static_cast<std::size_t>(window);
  Crystallization out;
  for (std::size_t c = 0; c < k; ++c) {
    Changepoint cp;
    cp.class_id = static_cast<int>(c);
    for (std::size_t e = 0; e + w <= recall.size(); ++e) {
      bool sustained = true;
      double sum = 0.0;
      for (std::size_t j = e; j < e + w; ++j) {
        sustained = sustained && recall[j][c] >= theta;
        sum += recall[j][c];
      }
      if (sustained) {
        cp.epoch = epochs[e];
        cp.statistic = sum / static_cast<double>(w);
        break;
      }
    }
    out.per_class.push_back(cp);
  }
  for (const auto& cp : out.per_class) {
    if (cp.epoch && (!out.overall.epoch || *cp.epoch < *out.overall.epoch)) out.overall = cp;
  }
  return out;
}

std::size_t classes_after_first(const Crystallization& result) {
  if (!result.overall.epoch) return 0;
  std::size_t later = 0;
  for (const auto& cp : result.per_class) {
    if (!cp.epoch || *cp.epoch > *result.overall.epoch) ++later;
  }
  return later;
}

}  // namespace densedyn
