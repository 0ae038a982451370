#include "part/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace part {

const Tensor& Var::value() const { return tape_->value(id_); }

std::span<const double> Var::grad() const {
  return static_cast<const Tape*>(tape_)->adjoint(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor& param) {
  Tensor snapshot(param.shape(), param.data());
  const bool grad = param.requires_grad();
  nodes_.push_back(Node{std::move(snapshot), {}, {}, grad ? &param : nullptr, grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool grad = false;
  for (const auto& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("operand recorded on a different tape");
    grad = grad || nodes_[in.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, grad ? std::move(backward) : Backward{}, nullptr, grad});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::adjoint(std::size_t id) {
  auto& node = nodes_[id];
  if (node.adjoint.size() != node.value.size()) node.adjoint.assign(node.value.size(), 0.0);
  return node.adjoint;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                shape_string(loss.shape()));
  }
  for (auto& node : nodes_) {
    if (node.needs_grad) node.adjoint.assign(node.value.size(), 0.0);
  }
  if (!nodes_[loss.id()].needs_grad) return;
  nodes_[loss.id()].adjoint[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward) node.backward(*this, i);
  }
}

void Tape::flush_param_grads(double scale) const {
  for (const auto& node : nodes_) {
    if (!node.param || node.adjoint.empty()) continue;
    auto g = node.param->grad();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += scale * node.adjoint[k];
  }
}

void backward(const Var& loss) {
  loss.tape()->backward(loss);
  loss.tape()->flush_param_grads();
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(a.shape()));
  }
}

// out (m x n) += a (m x k) * b (k x n)
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out (m x n) += a (m x k) * b^T, b is (n x k)
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] += acc;
    }
  }
}

// out (k x n) += a^T * b, a is (m x k), b is (m x n)
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  auto ov = out.values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    for (auto id : {ia, ib}) {
      if (!t.needs_grad(id)) continue;
      auto d = t.adjoint(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  auto ov = out.values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    if (t.needs_grad(ia)) {
      auto d = t.adjoint(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      auto d = t.adjoint(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a.value();
  auto ov = out.values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const auto av = t.value(ia).values();
    const auto bv = t.value(ib).values();
    if (t.needs_grad(ia)) {
      auto d = t.adjoint(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      auto d = t.adjoint(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, factor](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var add_row_bias(const Var& a, const Var& bias) {
  require_matrix(a, "add_row_bias");
  const std::size_t r = a.rows(), c = a.cols();
  if (bias.size() != c) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  const auto bv = bias.value().values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  const auto ia = a.id(), ib = bias.id();
  return a.tape()->record(std::move(out), {a, bias}, [ia, ib, r, c](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    if (t.needs_grad(ia)) {
      auto d = t.adjoint(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      auto d = t.adjoint(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) d[j] += g[i * c + j];
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const auto x = t.value(ia).values();
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) d[i] += g[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  gemm_nn(a.value().values().data(), b.value().values().data(), out.values().data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const double* g = t.adjoint(self).data();
    if (t.needs_grad(ia)) {
      // dA (m x k) += G (m x n) * B^T, B is (k x n)
      gemm_nt(g, t.value(ib).values().data(), t.adjoint(ia).data(), m, n, k);
    }
    if (t.needs_grad(ib)) {
      // dB (k x n) += A^T * G
      gemm_tn(t.value(ia).values().data(), g, t.adjoint(ib).data(), m, k, n);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out({m, n});
  gemm_nt(a.value().values().data(), b.value().values().data(), out.values().data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const double* g = t.adjoint(self).data();
    if (t.needs_grad(ia)) {
      // dA (m x k) += G (m x n) * B (n x k)
      gemm_nn(g, t.value(ib).values().data(), t.adjoint(ia).data(), m, n, k);
    }
    if (t.needs_grad(ib)) {
      // dB (n x k) += G^T * A
      gemm_tn(g, t.value(ia).values().data(), t.adjoint(ib).data(), m, n, k);
    }
  });
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = transpose(a.value());
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, m, n](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j * m + i];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var softmax_rows(const Var& a, double scale) {
  require_matrix(a, "softmax_rows");
  if (!(scale > 0.0)) throw std::invalid_argument("softmax_rows: scale must be positive");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({r, c});
  const auto x = a.value().values();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &x[i * c];
    double* o = &out.values()[i * c];
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp((row[j] - mx) / scale);
      total += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= total;
  }
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c, scale](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const auto y = t.value(self).values();
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        d[i * c + j] += y[i * c + j] * (g[i * c + j] - dot) / scale;
    }
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const auto ia = a.id();
  return a.tape()->record(Tensor::scalar(total), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.adjoint(self)[0];
    for (auto& d : t.adjoint(ia)) d += g;
  });
}

Var mean_rows(const Var& a) {
  require_matrix(a, "mean_rows");
  const std::vector<double> w(a.rows(), 1.0 / static_cast<double>(a.rows()));
  return weighted_row_sum(a, w);
}

Var weighted_row_sum(const Var& a, std::span<const double> weights) {
  require_matrix(a, "weighted_row_sum");
  const std::size_t r = a.rows(), c = a.cols();
  if (weights.size() != r) {
    throw DimensionError("weighted_row_sum: " + std::to_string(weights.size()) +
                         " weights for " + shape_string(a.shape()));
  }
  Tensor out({1, c});
  const auto x = a.value().values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += weights[i] * x[i * c + j];
  std::vector<double> w(weights.begin(), weights.end());
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c, w = std::move(w)](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += w[i] * g[j];
  });
}

Var mask_rows(const Var& a, std::span<const double> mask) {
  require_matrix(a, "mask_rows");
  const std::size_t r = a.rows(), c = a.cols();
  if (mask.size() != r) {
    throw DimensionError("mask_rows: mask of length " + std::to_string(mask.size()) + " for " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= mask[i];
  std::vector<double> m(mask.begin(), mask.end());
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c, m = std::move(m)](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += m[i] * g[i * c + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out({r, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].value().values();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(&v[i * widths[k]], widths[k], &out.values()[i * total + offset]);
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record(
      std::move(out), parts,
      [ids = std::move(ids), widths = std::move(widths), r, total](Tape& t, std::size_t self) {
        const auto g = t.adjoint(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.needs_grad(ids[k])) {
            auto d = t.adjoint(ids[k]);
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                d[i * widths[k] + j] += g[i * total + offset + j];
          }
          offset += widths[k];
        }
      });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  const std::size_t r = a.rows(), c = a.cols();
  if (begin >= end || end > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({r, w});
  const auto v = a.value().values();
  for (std::size_t i = 0; i < r; ++i) std::copy_n(&v[i * c + begin], w, &out.values()[i * w]);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c, begin, w](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto d = t.adjoint(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) d[i * c + begin + j] += g[i * w + j];
  });
}

Var gather_rows(const Var& g, std::span<const std::size_t> index, std::size_t n) {
  require_matrix(g, "gather_rows");
  const std::size_t cols = g.cols();
  if (g.rows() != n || index.size() != n * n) {
    throw DimensionError("gather_rows: source " + shape_string(g.shape()) + " with " +
                         std::to_string(index.size()) + " indices for n=" + std::to_string(n));
  }
  Tensor out({n, n});
  const auto src = g.value().values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto k = index[i * n + j];
      if (k >= cols) throw DimensionError("gather_rows: index out of range");
      out[i * n + j] = src[i * cols + k];
    }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const auto ig = g.id();
  return g.tape()->record(std::move(out), {g}, [ig, n, cols, idx = std::move(idx)](Tape& t, std::size_t self) {
    const auto grad = t.adjoint(self);
    auto d = t.adjoint(ig);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * cols + idx[i * n + j]] += grad[i * n + j];
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t b = logits.rows(), k = logits.cols();
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_string(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto x = logits.value().values();
  std::vector<double> probs(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = &x[i * k];
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(row[j] - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - log_z);
    loss += log_z - row[labels[i]];
  }
  loss /= static_cast<double>(b);
  std::vector<int> y(labels.begin(), labels.end());
  const auto il = logits.id();
  return logits.tape()->record(
      Tensor::scalar(loss), {logits},
      [il, b, k, probs = std::move(probs), y = std::move(y)](Tape& t, std::size_t self) {
        const double g = t.adjoint(self)[0] / static_cast<double>(b);
        auto d = t.adjoint(il);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < k; ++j) d[i * k + j] += g * probs[i * k + j];
          d[i * k + static_cast<std::size_t>(y[i])] -= g;
        }
      });
}

Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t stride,
           std::size_t pad) {
  const auto& xs = input.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 3 || ks.size() != 4 || ks[0] != ks[1] || ks[2] != xs[2] ||
      bias.size() != ks[3]) {
    throw DimensionError("conv2d shape mismatch: input " + shape_string(xs) + ", kernel " +
                         shape_string(ks) + ", bias " + shape_string(bias.shape()));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  const std::size_t h = xs[0], w = xs[1], cin = xs[2], k = ks[0], cout = ks[3];
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw DimensionError("conv2d: input " + shape_string(xs) + " smaller than kernel");
  }
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (w + 2 * pad - k) / stride + 1;
  Tensor out({ho, wo, cout});
  const auto x = input.value().values();
  const auto kv = kernel.value().values();
  const auto bv = bias.value().values();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* o = &out.values()[(oy * wo + ox) * cout];
      for (std::size_t co = 0; co < cout; ++co) o[co] = bv[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* xin = &x[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin];
          const double* kw = &kv[(ky * k + kx) * cin * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = xin[ci];
            const double* krow = kw + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += xv * krow[co];
          }
        }
      }
    }
  }
  const auto ix_id = input.id(), ik = kernel.id(), ib = bias.id();
  return input.tape()->record(
      std::move(out), {input, kernel, bias},
      [=](Tape& t, std::size_t self) {
        const auto g = t.adjoint(self);
        const bool gx = t.needs_grad(ix_id), gk = t.needs_grad(ik), gb = t.needs_grad(ib);
        const auto xv = t.value(ix_id).values();
        const auto kvv = t.value(ik).values();
        double* dx = gx ? t.adjoint(ix_id).data() : nullptr;
        double* dk = gk ? t.adjoint(ik).data() : nullptr;
        double* db = gb ? t.adjoint(ib).data() : nullptr;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double* go = &g[(oy * wo + ox) * cout];
            if (db)
              for (std::size_t co = 0; co < cout; ++co) db[co] += go[co];
            for (std::size_t ky = 0; ky < k; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto ixx = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                if (ixx < 0 || ixx >= static_cast<std::ptrdiff_t>(w)) continue;
                const std::size_t in_off = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ixx)) * cin;
                const std::size_t k_off = (ky * k + kx) * cin * cout;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  const double* krow = &kvv[k_off + ci * cout];
                  if (dx) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < cout; ++co) acc += krow[co] * go[co];
                    dx[in_off + ci] += acc;
                  }
                  if (dk) {
                    const double xvv = xv[in_off + ci];
                    double* dkrow = dk + k_off + ci * cout;
                    for (std::size_t co = 0; co < cout; ++co) dkrow[co] += xvv * go[co];
                  }
                }
              }
            }
          }
        }
      });
}

}  // namespace part
