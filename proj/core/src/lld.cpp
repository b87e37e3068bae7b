#include "densedyn/lld.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "densedyn/parallel.hpp"
#include "densedyn/prng.hpp"

namespace densedyn {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Problem {
  std::span<const double> y;
  int k = 0;
  double t_min = 0.0, t_max = 0.0;
  const LldOptions* opt = nullptr;

  // theta = [y0, a_1, b_1, t0_1, ..., a_K, b_K, t0_K]
  double predict(const Eigen::VectorXd& th, double t) const {
    double v = th[0];
    for (int i = 0; i < k; ++i) v += th[1 + 3 * i] * sigmoid(th[2 + 3 * i] * (t - th[3 + 3 * i]));
    return v;
  }

  double sse(const Eigen::VectorXd& th) const {
    double s = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      const double r = y[t] - predict(th, static_cast<double>(t));
      s += r * r;
    }
    return s;
  }

  std::pair<double, double> bounds(Eigen::Index d) const {
    if (d == 0) return opt->clamp_baseline ? std::pair{opt->baseline, opt->baseline} : std::pair{0.0, 1.0};
    switch ((d - 1) % 3) {
      case 0: return {0.0, opt->a_max};
      case 1: return {0.0, opt->b_max};
      default: return {t_min, t_max};
    }
  }

  void project(Eigen::VectorXd& th) const {
    for (Eigen::Index d = 0; d < th.size(); ++d) {
      const auto [lo, hi] = bounds(d);
      th[d] = std::clamp(th[d], lo, hi);
    }
  }

  // Jacobian of the model (not the residual) and the residual vector.
  void linearize(const Eigen::VectorXd& th, Eigen::MatrixXd& jac, Eigen::VectorXd& res) const {
    const auto n = static_cast<Eigen::Index>(y.size());
    jac.setZero(n, 1 + 3 * k);
    res.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double td = static_cast<double>(t);
      jac(t, 0) = opt->clamp_baseline ? 0.0 : 1.0;
      for (int i = 0; i < k; ++i) {
        const double a = th[1 + 3 * i], b = th[2 + 3 * i], t0 = th[3 + 3 * i];
        const double s = sigmoid(b * (td - t0));
        const double ds = s * (1.0 - s);
        jac(t, 1 + 3 * i) = s;
        jac(t, 2 + 3 * i) = a * ds * (td - t0);
        jac(t, 3 + 3 * i) = -a * b * ds;
      }
      res[t] = y[static_cast<std::size_t>(t)] - predict(th, td);
    }
  }
};

struct Attempt {
  Eigen::VectorXd theta;
  double sse = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
};

Attempt levenberg_marquardt(const Problem& pb, Eigen::VectorXd theta) {
  pb.project(theta);
  Attempt at;
  double sse = pb.sse(theta);
  double lambda = 1e-3;
  Eigen::MatrixXd jac;
  Eigen::VectorXd res;
  for (int it = 0; it < pb.opt->max_iterations; ++it) {
    at.iterations = it + 1;
    if (sse <= 1e-30) {
      at.converged = true;
      break;
    }
    pb.linearize(theta, jac, res);
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd g = jac.transpose() * res;
    // Freeze coordinates held at a bound by a gradient pointing outward.
    for (Eigen::Index d = 0; d < g.size(); ++d) {
      const auto [lo, hi] = pb.bounds(d);
      if ((theta[d] <= lo && g[d] <= 0.0) || (theta[d] >= hi && g[d] >= 0.0)) {
        jtj.row(d).setZero();
        jtj.col(d).setZero();
        jtj(d, d) = 1.0;
        g[d] = 0.0;
      }
    }
    bool accepted = false;
    double rel = 0.0;
    while (lambda <= 1e16) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index d = 0; d < a.rows(); ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-9);
      Eigen::VectorXd cand = theta + a.ldlt().solve(g);
      pb.project(cand);
      const double cand_sse = pb.sse(cand);
      if (std::isfinite(cand_sse) && cand_sse < sse) {
        rel = (sse - cand_sse) / std::max(sse, 1e-300);
        theta = cand;
        sse = cand_sse;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted || rel < 1e-13) {
      at.converged = true;
      break;
    }
  }
  at.theta = theta;
  at.sse = sse;
  return at;
}

// Time at which the cumulative positive-increment mass reaches quantile q.
double mass_quantile(const std::vector<double>& cum, double q) {
  const double total = cum.back();
  const double n = static_cast<double>(cum.size());
  if (!(total > 0.0)) return q * (n - 1.0);
  const double target = q * total;
  const auto it = std::lower_bound(cum.begin(), cum.end(), target);
  const std::size_t idx = static_cast<std::size_t>(it - cum.begin());
  if (idx == 0) return 0.0;
  const double lo = cum[idx - 1], hi = cum[idx];
  const double frac = hi > lo ? (target - lo) / (hi - lo) : 0.0;
  // cum[i] accumulates the increment between t=i-1 and t=i.
  return static_cast<double>(idx) - 1.0 + frac;
}

LldFit to_fit(const Problem& pb, const Attempt& at, int start) {
  LldFit fit;
  fit.k = pb.k;
  fit.y0 = at.theta[0];
  for (int i = 0; i < pb.k; ++i) fit.components.push_back({at.theta[1 + 3 * i], at.theta[2 + 3 * i], at.theta[3 + 3 * i]});
  std::stable_sort(fit.components.begin(), fit.components.end(),
                   [](const LogisticComponent& l, const LogisticComponent& r) { return l.t0 < r.t0; });
  fit.sse = at.sse;
  double mean = 0.0;
  for (double v : pb.y) mean += v;
  mean /= static_cast<double>(pb.y.size());
  double sst = 0.0;
  for (double v : pb.y) sst += (v - mean) * (v - mean);
  fit.r2 = sst > 0.0 ? 1.0 - at.sse / sst : (at.sse == 0.0 ? 1.0 : 0.0);
  fit.converged = at.converged;
  fit.start_index = start;
  fit.iterations = at.iterations;
  return fit;
}

}  // namespace

double LldFit::component(std::size_t i, double t) const {
  const auto& c = components.at(i);
  return c.a * sigmoid(c.b * (t - c.t0));
}

double LldFit::predict(double t) const {
  double v = y0;
  for (std::size_t i = 0; i < components.size(); ++i) v += component(i, t);
  return v;
}

LldFit fit_logistic_mixture(std::span<const double> curve, int k, const LldOptions& options, const LldFit* warm_start) {
  if (k <= 0) throw std::invalid_argument("fit_logistic_mixture: K must be positive, got " + std::to_string(k));
  const std::size_t n = curve.size();
  if (n < static_cast<std::size_t>(3 * k + 2)) {
    throw std::invalid_argument("fit_logistic_mixture: curve of length " + std::to_string(n) + " is too short for K=" +
                                std::to_string(k) + " (needs " + std::to_string(3 * k + 2) + ")");
  }
  for (double v : curve) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("fit_logistic_mixture: curve values must lie in [0,1]");
  }
  if (options.starts < 1) throw std::invalid_argument("fit_logistic_mixture: need at least one start");
  if (warm_start != nullptr && warm_start->k != k - 1) {
    throw std::invalid_argument("fit_logistic_mixture: warm start must have K-1 components");
  }

  const double big_t = static_cast<double>(n);
  Problem pb{curve, k, -big_t, 2.0 * big_t, &options};

  std::vector<double> cum(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) cum[t] = cum[t - 1] + std::max(curve[t] - curve[t - 1], 0.0);
  const double lo = *std::min_element(curve.begin(), curve.end());
  const double hi = *std::max_element(curve.begin(), curve.end());
  const double y0_start = options.clamp_baseline ? options.baseline : lo;
  const double a_start = std::max(hi - y0_start, 0.0) / static_cast<double>(k);

  std::vector<Eigen::VectorXd> starts;
  Prng rng = Prng(options.seed).derive(static_cast<std::uint64_t>(k));
  for (int m = 0; m < options.starts; ++m) {
    Eigen::VectorXd th(1 + 3 * k);
    th[0] = y0_start;
    std::vector<double> q(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      q[static_cast<std::size_t>(i)] = m == 0 ? (i + 0.5) / k : rng.uniform();
    }
    std::sort(q.begin(), q.end());
    for (int i = 0; i < k; ++i) {
      const double log_b = m == 0 ? 0.5 * (std::log(0.05) + std::log(2.0)) : rng.uniform(std::log(0.05), std::log(2.0));
      th[1 + 3 * i] = a_start;
      th[2 + 3 * i] = std::exp(log_b);
      th[3 + 3 * i] = mass_quantile(cum, q[static_cast<std::size_t>(i)]);
    }
    starts.push_back(th);
  }
  if (warm_start != nullptr) {
    Eigen::VectorXd th(1 + 3 * k);
    th[0] = warm_start->y0;
    for (int i = 0; i < k - 1; ++i) {
      const auto& c = warm_start->components[static_cast<std::size_t>(i)];
      th[1 + 3 * i] = c.a;
      th[2 + 3 * i] = c.b;
      th[3 + 3 * i] = c.t0;
    }
    th[1 + 3 * (k - 1)] = 0.0;
    th[2 + 3 * (k - 1)] = 0.5;
    th[3 + 3 * (k - 1)] = mass_quantile(cum, 0.5);
    starts.push_back(th);
  }

  std::vector<Attempt> attempts(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) { attempts[i] = levenberg_marquardt(pb, starts[i]); });

  int best = -1, best_any = 0;
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    if (attempts[i].sse < attempts[static_cast<std::size_t>(best_any)].sse) best_any = static_cast<int>(i);
    if (!attempts[i].converged) continue;
    if (best < 0 || attempts[i].sse < attempts[static_cast<std::size_t>(best)].sse) best = static_cast<int>(i);
  }
  if (best < 0) {
    throw LldFitError("fit_logistic_mixture: no start converged for K=" + std::to_string(k),
                      to_fit(pb, attempts[static_cast<std::size_t>(best_any)], best_any));
  }
  return to_fit(pb, attempts[static_cast<std::size_t>(best)], best);
}

double lld_bic(const LldFit& fit, std::size_t n) {
  const double nn = static_cast<double>(n);
  return nn * std::log(std::max(fit.sse / nn, 1e-16)) + static_cast<double>(fit.parameter_count()) * std::log(nn);
}

ComponentSelection select_component_count(std::span<const double> curve, int k_max, const LldOptions& options) {
  if (k_max < 1) throw std::invalid_argument("select_component_count: K_max must be at least 1");
  ComponentSelection sel;
  for (int k = 1; k <= k_max; ++k) {
    sel.fits.push_back(fit_logistic_mixture(curve, k, options, k > 1 ? &sel.fits.back() : nullptr));
    sel.bic.push_back(lld_bic(sel.fits.back(), curve.size()));
  }
  sel.best_k = 1;
  for (int k = 2; k <= k_max; ++k) {
    if (sel.bic[static_cast<std::size_t>(k - 1)] < sel.bic[static_cast<std::size_t>(sel.best_k - 1)]) sel.best_k = k;
  }
  return sel;
}

}  // namespace densedyn
