#include "densedyn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace densedyn {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

void Optimizer::step(std::span<Parameter* const> params) {
  ++step_;
  if (hyper_.kind == OptimizerKind::kSgd) {
    for (Parameter* p : params) {
      auto w = p->value.data();
      auto g = p->grad.data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= hyper_.learning_rate * g[i];
    }
    return;
  }

  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k].assign(params[k]->value.size(), 0.0);
      v_[k].assign(params[k]->value.size(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw std::invalid_argument("Optimizer::step: parameter list changed between steps");
  }

  const double b1 = hyper_.beta1, b2 = hyper_.beta2;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  const double lr = hyper_.learning_rate;
  const double eps = hyper_.epsilon;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value.data();
    auto g = params[k]->grad.data();
    if (m_[k].size() != w.size()) throw std::invalid_argument("Optimizer::step: parameter size changed");
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace densedyn
