#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "part/tensor.hpp"

namespace part {

/// w <- w - lr * g for a single tensor.
void sgd_step(Tensor& w, std::span<const double> g, double lr);
/// Applies sgd_step to each parameter using its stored gradient.
void sgd_step(std::span<Tensor* const> params, double lr);

/// Step-annealed learning rate: base * factor^floor(epoch / period).
struct StepSchedule {
  double base = 8e-4;
  int period = 60;
  double factor = 0.1;

  double operator()(int epoch) const;
};

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

/// Stateful update rule over a fixed parameter list.
///
/// Plain SGD with momentum 0 reduces to sgd_step. Adam keeps first and second
/// moment buffers per coordinate with the usual bias correction.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<Tensor*> params, double momentum = 0.0,
            double weight_decay = 0.0);

  void step(double lr);
  void zero_grad();

  OptimizerKind kind() const noexcept { return kind_; }
  const std::vector<Tensor*>& params() const noexcept { return params_; }

 private:
  OptimizerKind kind_;
  std::vector<Tensor*> params_;
  double momentum_;
  double weight_decay_;
  long steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace part
