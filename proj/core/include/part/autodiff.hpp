#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "part/tensor.hpp"

namespace part {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::span<const double> grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of primitive operations.
///
/// Nodes are appended as they are created, so an input always has a smaller
/// index than its consumers; the reverse sweep in backward() is therefore a
/// reverse topological order that touches every node exactly once.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Records a snapshot of `param`. If the parameter requires grad, the
  /// adjoint is routed back to param.grad() by flush_param_grads().
  Var leaf(Tensor& param);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  /// Reverse sweep from a scalar. Throws std::invalid_argument otherwise.
  void backward(const Var& loss);
  /// Adds scale * adjoint of every parameter leaf into the parameter's grad.
  void flush_param_grads(double scale = 1.0) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::span<double> adjoint(std::size_t id);
  std::span<const double> adjoint(std::size_t id) const { return nodes_[id].adjoint; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> adjoint;
    Backward backward;
    Tensor* param = nullptr;
    bool needs_grad = false;
  };

  // deque keeps references returned by value() stable while recording.
  std::deque<Node> nodes_;
};

/// Runs the reverse sweep and stores gradients on all participating parameters.
void backward(const Var& loss);

// ---------------------------------------------------------------------------
// Differentiable primitives. All operands must live on the same tape.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// a (r x c) + bias (c, or 1 x c) broadcast over rows.
Var add_row_bias(const Var& a, const Var& bias);
Var relu(const Var& a);

Var matmul(const Var& a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

/// Row-wise softmax of a / scale, stabilized by the row maximum.
Var softmax_rows(const Var& a, double scale);

Var sum(const Var& a);
/// Mean over rows: (r x c) -> (1 x c).
Var mean_rows(const Var& a);
/// Weighted sum over rows with constant weights: (r x c) -> (1 x c).
Var weighted_row_sum(const Var& a, std::span<const double> weights);
/// Scales row i by the constant mask[i] (Hadamard product broadcast over columns).
Var mask_rows(const Var& a, std::span<const double> mask);

/// Horizontal concatenation of matrices with equal row counts.
Var concat_cols(std::span<const Var> parts);
/// Column slice [begin, end) of a matrix.
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);

/// out[i, j] = g[i, index[i * n + j]] for an (n x T) source and an n x n index.
Var gather_rows(const Var& g, std::span<const std::size_t> index, std::size_t n);

/// Mean softmax cross-entropy of logits (b x K) against integer labels.
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// 2-D convolution on an {H, W, Cin} map with kernel {k, k, Cin, Cout} and bias {Cout}.
Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t stride,
           std::size_t pad);

}  // namespace part
