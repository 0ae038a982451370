#include "part/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace part {

void sgd_step(Tensor& w, std::span<const double> g, double lr) {
  if (lr < 0.0) throw std::invalid_argument("learning rate must be nonnegative");
  if (g.size() != w.size()) {
    throw DimensionError("gradient size " + std::to_string(g.size()) + " does not match " +
                         shape_string(w.shape()));
  }
  auto values = w.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * g[i];
}

void sgd_step(std::span<Tensor* const> params, double lr) {
  for (Tensor* p : params) {
    if (!p->has_grad()) continue;
    sgd_step(*p, std::as_const(*p).grad(), lr);
  }
}

double StepSchedule::operator()(int epoch) const {
  if (epoch < 0) epoch = 0;
  return base * std::pow(factor, epoch / period);
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

Optimizer::Optimizer(OptimizerKind kind, std::vector<Tensor*> params, double momentum,
                     double weight_decay)
    : kind_(kind), params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (Tensor* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    if (kind_ == OptimizerKind::adam) v_.emplace_back(p->size(), 0.0);
  }
}

void Optimizer::step(double lr) {
  if (lr < 0.0) throw std::invalid_argument("learning rate must be nonnegative");
  ++steps_;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));

  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    if (!p.has_grad()) continue;
    auto w = p.values();
    const auto g = std::as_const(p).grad();
    auto& m = m_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay_ * w[i];
      if (kind_ == OptimizerKind::sgd) {
        if (momentum_ == 0.0) {
          w[i] -= lr * gi;
        } else {
          m[i] = momentum_ * m[i] + gi;
          w[i] -= lr * m[i];
        }
      } else {
        auto& v = v_[k];
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace part
