#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace densedyn {

/// One term a / (1 + exp(-b (t - t0))) of the learning-curve decomposition.
struct LogisticComponent {
  double a = 0.0;   // amplitude, >= 0
  double b = 0.0;   // rate per epoch, >= 0
  double t0 = 0.0;  // midpoint in epochs
};

/// y(t) = y0 + sum_i a_i / (1 + exp(-b_i (t - t0_i))), t = 0-based epoch index.
struct LldFit {
  std::vector<LogisticComponent> components;  // sorted by t0 ascending
  double y0 = 0.0;
  double sse = 0.0;
  double r2 = 0.0;
  int k = 0;
  bool converged = false;
  int start_index = -1;  // multi-start that produced the fit
  int iterations = 0;

  double predict(double t) const;
  double component(std::size_t i, double t) const;
  std::size_t parameter_count() const noexcept { return 3 * components.size() + 1; }
};

struct LldOptions {
  int starts = 32;
  std::uint64_t seed = 0x11d5eedULL;
  int max_iterations = 2000;
  double b_max = 20.0;
  /// Upper bound on each amplitude; the baseline is kept in [0, 1].
  double a_max = 1.0;
  /// Fix y0 at `baseline` instead of fitting it.
  bool clamp_baseline = false;
  double baseline = 0.2;
};

/// Thrown when no multi-start converges; carries the lowest-SSE attempt.
class LldFitError : public std::runtime_error {
 public:
  LldFitError(const std::string& what, LldFit best) : std::runtime_error(what), best_(std::move(best)) {}
  const LldFit& best_partial() const noexcept { return best_; }

 private:
  LldFit best_;
};

/// Bound-constrained Levenberg-Marquardt fit of a K-component mixture from
/// seeded multi-starts. `warm_start`, when given, is a (K-1)-component fit that
/// is padded with a zero-amplitude term and tried as an extra start.
LldFit fit_logistic_mixture(std::span<const double> curve, int k, const LldOptions& options = {},
                            const LldFit* warm_start = nullptr);

double lld_bic(const LldFit& fit, std::size_t n);

struct ComponentSelection {
  int best_k = 0;
  std::vector<LldFit> fits;  // fits[k-1] has k components
  std::vector<double> bic;
};

/// Fits K = 1..k_max (each warm-started from K-1) and picks the lowest BIC;
/// ties go to the smaller K.
ComponentSelection select_component_count(std::span<const double> curve, int k_max, const LldOptions& options = {});

}  // namespace densedyn
