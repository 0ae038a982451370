#include "part/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace part {

namespace {

double evaluate(const ScalarFn& f, std::span<Tensor* const> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (Tensor* p : params) leaves.push_back(tape.leaf(*p));
  const Var loss = f(tape, leaves);
  if (loss.size() != 1) throw std::invalid_argument("grad_check: function must return a scalar");
  return loss.value()[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor* const> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  std::vector<bool> saved_flags;
  for (Tensor* p : params) {
    saved_flags.push_back(p->requires_grad());
    p->set_requires_grad(true);
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (Tensor* p : params) leaves.push_back(tape.leaf(*p));
    const Var loss = f(tape, leaves);
    tape.backward(loss);
    for (const auto& leaf : leaves) {
      const auto g = leaf.grad();
      if (g.empty()) {
        analytic.emplace_back(leaf.size(), 0.0);
      } else {
        analytic.emplace_back(g.begin(), g.end());
      }
    }
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi]->values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double original = values[k];
      values[k] = original + h;
      const double up = evaluate(f, params);
      values[k] = original - h;
      const double down = evaluate(f, params);
      values[k] = original;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = pi;
        report.worst_index = k;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->set_requires_grad(saved_flags[i]);
  return report;
}

}  // namespace part
