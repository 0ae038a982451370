#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "part/autodiff.hpp"
#include "part/checkpoint.hpp"
#include "part/encoding.hpp"

namespace part {

struct HeadParams {
  Tensor w_qry;  // C x C_h
  Tensor w_key;  // C x C_h
  Tensor w_val;  // C x C_h
  // Relative mode only.
  Tensor w_rel;  // d_R x C_h
  Tensor u;      // 1 x C_h
  Tensor v;      // 1 x C_h
};

struct LayerParams {
  std::vector<HeadParams> heads;
  Tensor w_o;  // (m * C_h) x C
  Tensor b_o;  // 1 x C
  Tensor w_f;  // C x C
  Tensor b_f;  // 1 x C
  /// Absolute mode only: (W*H) x C, fixed sinusoid or learnable.
  Tensor encoding;
};

enum class Activation { relu, identity };

struct LayerShape {
  std::size_t channels = 32;
  std::size_t heads = 1;
  /// 0 selects channels / heads.
  std::size_t head_dim = 0;
  PosMode mode = PosMode::relative;
  /// Relative table dimension; 0 selects channels.
  std::size_t rel_dim = 0;
  bool learnable_encoding = false;
  std::size_t grid_w = 1;
  std::size_t grid_h = 1;

  std::size_t resolved_head_dim() const;
  std::size_t resolved_rel_dim() const { return rel_dim ? rel_dim : channels; }
};

/// Weights uniform in +-gain/sqrt(fan_in); biases, u and v start at zero.
LayerParams init_layer(const LayerShape& shape, std::mt19937_64& rng, double gain = 1.0);

/// Every trainable tensor of the layer, with a stable name.
void collect(LayerParams& layer, const std::string& prefix, std::vector<std::pair<std::string, Tensor*>>& out);

struct HeadVars {
  Var w_qry, w_key, w_val;
  RelativeVars rel;
};

struct LayerVars {
  std::vector<HeadVars> heads;
  Var w_o, b_o, w_f, b_f;
  Var encoding;  // invalid unless absolute mode
};

/// Produces the Var standing for a parameter tensor.
using LeafFn = std::function<Var(Tensor&)>;

HeadVars bind(Tape& tape, HeadParams& head, PosMode mode);
LayerVars bind(Tape& tape, LayerParams& layer, PosMode mode);
HeadVars bind(const LeafFn& leaf, HeadParams& head, PosMode mode);
LayerVars bind(const LeafFn& leaf, LayerParams& layer, PosMode mode);

struct AttentionOptions {
  PosMode mode = PosMode::none;
  /// Required in relative mode.
  const OffsetTable* table = nullptr;
  Activation activation = Activation::relu;
  /// Adds a large negative constant to logits of keys outside the mask instead
  /// of relying on feature masking alone.
  bool mask_logits = false;
};

/// Attention logits of one head. E is used (added to X on both sides) in
/// absolute mode and must be invalid otherwise.
Var attention_logits(const Var& X, const Var& E, const HeadVars& head, const AttentionOptions& opts);

/// softmax(A / sqrt(C)) X W_val, C = X.cols().
Var attention_head(const Var& X, const Var& A, const Var& w_val);

/// concat(heads) W_o + b_o.
Var multi_head(std::span<const Var> heads, const Var& w_o, const Var& b_o);

/// One head on X masked by `mask` (one weight per pixel), plus E in absolute mode.
Var masked_head(const Var& X, const Var& E, std::span<const double> mask, const HeadVars& head,
                const AttentionOptions& opts);

/// Multi-head attention and feed-forward. An empty mask means unmasked.
Var transformer_layer(const Var& input, const LayerVars& layer, const AttentionOptions& opts,
                      std::span<const double> mask = {});

/// O_0 = X, O_t = layer_t(O_{t-1} + X).
Var stack_forward(const Var& X, std::span<const LayerVars> layers, const AttentionOptions& opts,
                  std::span<const double> mask = {});

}  // namespace part
