#pragma once

#include <cstddef>
#include <vector>

#include "part/encoding.hpp"
#include "part/transformer.hpp"

namespace part {

/// Brute-force stride-1 convolution with zero padding k/2.
/// X: {H, W, Cin}, kernel: {k, k, Cin, Cout} indexed [ky][kx], bias: {Cout}.
Tensor conv2d_reference(const Tensor& X, const Tensor& kernel, const Tensor& bias);

/// A relative-mode attention layer whose heads each attend to one kernel offset.
struct ConvAttention {
  LayerParams layer;
  OffsetTable table;
  /// (dx, dy) per head, in kernel order.
  std::vector<std::pair<long, long>> offsets;
};

/// Head that attends from query q toward key q + (dx, dy) on a quadratic table:
/// W_qry = W_key = 0, W_val = I (zero-padded to at least 4 columns), the
/// relative projection picks out the first four table columns and v is set so
/// that the logit of key k equals
/// -alpha * |k - q - delta|^2 + alpha * c.
HeadParams construct_conv_attention(long dx, long dy, double alpha, double c, std::size_t channels);

/// One head per kernel offset; W_o stacks the kernel slices, b_o is the conv
/// bias and the feed-forward is an identity pass-through.
ConvAttention construct_conv_layer(const Tensor& kernel, const Tensor& bias, double alpha, double c,
                                   std::size_t width, std::size_t height);

/// Runs the constructed layer (identity activation) on X: {H, W, Cin}.
Tensor conv_attention_forward(const Tensor& X, ConvAttention& conv);

/// Max |attention - convolution| over pixels at least k/2 away from every border.
double equivalence_gap(const Tensor& X, const Tensor& kernel, const Tensor& bias, double alpha,
                       double c = 0.0);

}  // namespace part
