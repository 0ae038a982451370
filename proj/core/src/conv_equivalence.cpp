#include "part/conv_equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace part {

namespace {

void check_conv_shapes(const Tensor& X, const Tensor& kernel, const Tensor& bias) {
  if (X.rank() != 3) throw DimensionError("input must be {H, W, Cin}, got " + shape_string(X.shape()));
  if (kernel.rank() != 4 || kernel.extent(0) != kernel.extent(1) || kernel.extent(0) % 2 == 0 ||
      kernel.extent(2) != X.extent(2)) {
    throw DimensionError("kernel " + shape_string(kernel.shape()) + " does not fit input " +
                         shape_string(X.shape()));
  }
  if (bias.size() != kernel.extent(3)) throw DimensionError("bias size does not match kernel outputs");
}

}  // namespace

Tensor conv2d_reference(const Tensor& X, const Tensor& kernel, const Tensor& bias) {
  check_conv_shapes(X, kernel, bias);
  const long H = static_cast<long>(X.extent(0)), W = static_cast<long>(X.extent(1));
  const std::size_t cin = X.extent(2), cout = kernel.extent(3), k = kernel.extent(0);
  const long r = static_cast<long>(k / 2);
  Tensor Y({X.extent(0), X.extent(1), cout});
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = bias[co];
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long sy = y + static_cast<long>(ky) - r, sx = x + static_cast<long>(kx) - r;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              acc += X[(static_cast<std::size_t>(sy * W + sx)) * cin + ci] *
                     kernel[((ky * k + kx) * cin + ci) * cout + co];
            }
          }
        }
        Y[static_cast<std::size_t>(y * W + x) * cout + co] = acc;
      }
    }
  }
  return Y;
}

HeadParams construct_conv_attention(long dx, long dy, double alpha, double c, std::size_t channels) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (channels == 0) throw std::invalid_argument("a head needs at least one channel");
  // The head needs four dims for the positional read-out; narrower inputs are
  // padded with value columns that stay zero.
  const std::size_t ch = std::max<std::size_t>(channels, 4);
  HeadParams head;
  head.w_qry = Tensor({channels, ch});
  head.w_key = Tensor({channels, ch});
  head.w_val = Tensor({channels, ch});
  for (std::size_t i = 0; i < channels; ++i) head.w_val.at(i, i) = 1.0;
  head.w_rel = Tensor({4, ch});
  for (std::size_t i = 0; i < 4; ++i) head.w_rel.at(i, i) = 1.0;
  head.u = Tensor({1, ch});
  head.v = Tensor({1, ch});
  // The table is indexed by o = query - key, so key - query - delta = -(o + delta)
  // and -alpha |o + delta|^2 + alpha c expands to the row (|o|^2, o_x, o_y, 1)
  // dotted with alpha (-1, -2 dx, -2 dy, c - |delta|^2).
  const double dd = static_cast<double>(dx * dx + dy * dy);
  head.v.at(0, 0) = -alpha;
  head.v.at(0, 1) = -2.0 * alpha * static_cast<double>(dx);
  head.v.at(0, 2) = -2.0 * alpha * static_cast<double>(dy);
  head.v.at(0, 3) = alpha * (c - dd);
  return head;
}

ConvAttention construct_conv_layer(const Tensor& kernel, const Tensor& bias, double alpha, double c,
                                   std::size_t width, std::size_t height) {
  if (kernel.rank() != 4 || kernel.extent(0) != kernel.extent(1) || kernel.extent(0) % 2 == 0) {
    throw DimensionError("kernel must be {k, k, Cin, Cout} with odd k, got " + shape_string(kernel.shape()));
  }
  const std::size_t k = kernel.extent(0), cin = kernel.extent(2), cout = kernel.extent(3);
  if (bias.size() != cout) throw DimensionError("bias size does not match kernel outputs");
  const long r = static_cast<long>(k / 2);
  if (r >= static_cast<long>(width) || r >= static_cast<long>(height)) {
    throw std::invalid_argument("kernel offsets are not representable on this grid");
  }

  ConvAttention conv{{}, OffsetTable::quadratic(width, height), {}};
  const std::size_t m = k * k, ch = std::max<std::size_t>(cin, 4);
  conv.layer.w_o = Tensor({m * ch, cout});
  for (std::size_t ky = 0; ky < k; ++ky) {
    for (std::size_t kx = 0; kx < k; ++kx) {
      const long dx = static_cast<long>(kx) - r, dy = static_cast<long>(ky) - r;
      const std::size_t h = ky * k + kx;
      conv.layer.heads.push_back(construct_conv_attention(dx, dy, alpha, c, cin));
      conv.offsets.emplace_back(dx, dy);
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t co = 0; co < cout; ++co)
          conv.layer.w_o.at(h * ch + ci, co) = kernel[((ky * k + kx) * cin + ci) * cout + co];
    }
  }
  conv.layer.b_o = Tensor({1, cout}, std::vector<double>(bias.values().begin(), bias.values().end()));
  conv.layer.w_f = Tensor::identity(cout);
  conv.layer.b_f = Tensor({1, cout});
  return conv;
}

Tensor conv_attention_forward(const Tensor& X, ConvAttention& conv) {
  if (X.rank() != 3) throw DimensionError("input must be {H, W, Cin}, got " + shape_string(X.shape()));
  const std::size_t H = X.extent(0), W = X.extent(1), cin = X.extent(2);
  Tape tape;
  const Var input = tape.constant(X.reshaped({H * W, cin}));
  const LayerVars vars = bind(tape, conv.layer, PosMode::relative);
  AttentionOptions opts;
  opts.mode = PosMode::relative;
  opts.table = &conv.table;
  opts.activation = Activation::identity;
  const Var out = transformer_layer(input, vars, opts);
  return out.value().reshaped({H, W, out.cols()});
}

double equivalence_gap(const Tensor& X, const Tensor& kernel, const Tensor& bias, double alpha, double c) {
  check_conv_shapes(X, kernel, bias);
  const std::size_t H = X.extent(0), W = X.extent(1), cout = kernel.extent(3);
  const std::size_t r = kernel.extent(0) / 2;
  ConvAttention conv = construct_conv_layer(kernel, bias, alpha, c, W, H);
  const Tensor attn = conv_attention_forward(X, conv);
  const Tensor ref = conv2d_reference(X, kernel, bias);
  double gap = 0.0;
  for (std::size_t y = r; y + r < H; ++y)
    for (std::size_t x = r; x + r < W; ++x)
      for (std::size_t co = 0; co < cout; ++co) {
        const std::size_t i = (y * W + x) * cout + co;
        gap = std::max(gap, std::abs(attn[i] - ref[i]));
      }
  return gap;
}

}  // namespace part
