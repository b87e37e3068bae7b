#include "densedyn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace densedyn {

GradcheckReport gradcheck(std::span<Parameter* const> params, const LossFunction& loss, double epsilon,
                          double grad_floor) {
  GradcheckReport report;
  if (params.empty()) return report;

  loss(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + epsilon;
      const double up = loss(false);
      p.value[i] = saved - epsilon;
      const double down = loss(false);
      p.value[i] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), grad_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace densedyn
