#include "part/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace part {

namespace {

constexpr double masked_logit = -1e9;

Tensor uniform(Shape shape, std::size_t fan_in, double gain, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : t.values()) x = dist(rng);
  t.set_requires_grad(true);
  return t;
}

Tensor zeros(Shape shape) {
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

std::size_t LayerShape::resolved_head_dim() const {
  if (head_dim) return head_dim;
  if (heads == 0 || channels % heads != 0) {
    throw std::invalid_argument("channels " + std::to_string(channels) + " not divisible by " +
                                std::to_string(heads) + " heads; set head_dim explicitly");
  }
  return channels / heads;
}

LayerParams init_layer(const LayerShape& shape, std::mt19937_64& rng, double gain) {
  if (shape.heads == 0) throw std::invalid_argument("a layer needs at least one head");
  const std::size_t C = shape.channels, ch = shape.resolved_head_dim();
  LayerParams layer;
  for (std::size_t h = 0; h < shape.heads; ++h) {
    HeadParams head;
    head.w_qry = uniform({C, ch}, C, gain, rng);
    head.w_key = uniform({C, ch}, C, gain, rng);
    head.w_val = uniform({C, ch}, C, gain, rng);
    if (shape.mode == PosMode::relative) {
      head.w_rel = uniform({shape.resolved_rel_dim(), ch}, shape.resolved_rel_dim(), gain, rng);
      head.u = zeros({1, ch});
      head.v = zeros({1, ch});
    }
    layer.heads.push_back(std::move(head));
  }
  layer.w_o = uniform({shape.heads * ch, C}, shape.heads * ch, gain, rng);
  layer.b_o = zeros({1, C});
  layer.w_f = uniform({C, C}, C, gain, rng);
  layer.b_f = zeros({1, C});
  if (shape.mode == PosMode::absolute) {
    if (shape.learnable_encoding) {
      layer.encoding = zeros({shape.grid_w * shape.grid_h, C});
    } else {
      layer.encoding = absolute_encoding(shape.grid_w, shape.grid_h, C);
    }
  }
  return layer;
}

void collect(LayerParams& layer, const std::string& prefix,
             std::vector<std::pair<std::string, Tensor*>>& out) {
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    auto& head = layer.heads[h];
    const std::string p = prefix + ".head" + std::to_string(h);
    out.emplace_back(p + ".w_qry", &head.w_qry);
    out.emplace_back(p + ".w_key", &head.w_key);
    out.emplace_back(p + ".w_val", &head.w_val);
    if (!head.w_rel.empty()) {
      out.emplace_back(p + ".w_rel", &head.w_rel);
      out.emplace_back(p + ".u", &head.u);
      out.emplace_back(p + ".v", &head.v);
    }
  }
  out.emplace_back(prefix + ".w_o", &layer.w_o);
  out.emplace_back(prefix + ".b_o", &layer.b_o);
  out.emplace_back(prefix + ".w_f", &layer.w_f);
  out.emplace_back(prefix + ".b_f", &layer.b_f);
  if (layer.encoding.requires_grad()) out.emplace_back(prefix + ".encoding", &layer.encoding);
}

HeadVars bind(const LeafFn& leaf, HeadParams& head, PosMode mode) {
  HeadVars v{leaf(head.w_qry), leaf(head.w_key), leaf(head.w_val), {}};
  if (mode == PosMode::relative) {
    if (head.w_rel.empty()) throw std::invalid_argument("relative mode needs relative head parameters");
    v.rel = {leaf(head.w_rel), leaf(head.u), leaf(head.v)};
  }
  return v;
}

LayerVars bind(const LeafFn& leaf, LayerParams& layer, PosMode mode) {
  LayerVars v;
  for (auto& head : layer.heads) v.heads.push_back(bind(leaf, head, mode));
  v.w_o = leaf(layer.w_o);
  v.b_o = leaf(layer.b_o);
  v.w_f = leaf(layer.w_f);
  v.b_f = leaf(layer.b_f);
  if (mode == PosMode::absolute) {
    if (layer.encoding.empty()) throw std::invalid_argument("absolute mode needs an encoding table");
    v.encoding = leaf(layer.encoding);
  }
  return v;
}

HeadVars bind(Tape& tape, HeadParams& head, PosMode mode) {
  return bind([&tape](Tensor& t) { return tape.leaf(t); }, head, mode);
}

LayerVars bind(Tape& tape, LayerParams& layer, PosMode mode) {
  return bind([&tape](Tensor& t) { return tape.leaf(t); }, layer, mode);
}

Var attention_logits(const Var& X, const Var& E, const HeadVars& head, const AttentionOptions& opts) {
  switch (opts.mode) {
    case PosMode::none:
      if (E.valid()) throw std::invalid_argument("positional encoding supplied in mode 'none'");
      return matmul_nt(matmul(X, head.w_qry), matmul(X, head.w_key));
    case PosMode::absolute: {
      if (!E.valid()) throw std::invalid_argument("absolute mode needs an encoding");
      const Var XE = add(X, E);
      return matmul_nt(matmul(XE, head.w_qry), matmul(XE, head.w_key));
    }
    case PosMode::relative: {
      if (E.valid()) throw std::invalid_argument("absolute encoding supplied in relative mode");
      if (opts.table == nullptr || !head.rel.w_rel.valid()) {
        throw std::invalid_argument("relative mode needs an offset table and relative parameters");
      }
      const Var content = matmul_nt(matmul(X, head.w_qry), matmul(X, head.w_key));
      return add(content, relative_logit_terms(X, head.w_qry, head.w_key, head.rel, *opts.table));
    }
  }
  throw std::invalid_argument("unknown positional mode");
}

Var attention_head(const Var& X, const Var& A, const Var& w_val) {
  if (A.rows() != X.rows() || A.cols() != X.rows()) {
    throw DimensionError("attention matrix " + shape_string(A.shape()) + " does not match " +
                         std::to_string(X.rows()) + " pixels");
  }
  const double scale = std::sqrt(static_cast<double>(X.cols()));
  return matmul(matmul(softmax_rows(A, scale), X), w_val);
}

Var multi_head(std::span<const Var> heads, const Var& w_o, const Var& b_o) {
  if (heads.empty()) throw std::invalid_argument("multi_head needs at least one head");
  const Var joined = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return add_row_bias(matmul(joined, w_o), b_o);
}

namespace {

Var mask_out_keys(const Var& A, std::span<const double> mask) {
  const std::size_t n = A.rows();
  Tensor bias({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    if (mask[j] != 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) bias.at(i, j) = masked_logit;
  }
  return add(A, A.tape()->constant(std::move(bias)));
}

}  // namespace

Var masked_head(const Var& X, const Var& E, std::span<const double> mask, const HeadVars& head,
                const AttentionOptions& opts) {
  if (mask.size() != X.rows()) {
    throw DimensionError("mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(X.rows()) + " pixels");
  }
  const Var Xp = mask_rows(X, mask);
  Var A = attention_logits(Xp, E, head, opts);
  if (opts.mask_logits) A = mask_out_keys(A, mask);
  return attention_head(Xp, A, head.w_val);
}

Var transformer_layer(const Var& input, const LayerVars& layer, const AttentionOptions& opts,
                      std::span<const double> mask) {
  std::vector<Var> heads;
  heads.reserve(layer.heads.size());
  for (const auto& head : layer.heads) {
    if (mask.empty()) {
      heads.push_back(attention_head(input, attention_logits(input, layer.encoding, head, opts), head.w_val));
    } else {
      heads.push_back(masked_head(input, layer.encoding, mask, head, opts));
    }
  }
  Var O = multi_head(heads, layer.w_o, layer.b_o);
  if (opts.activation == Activation::relu) O = relu(O);
  return add_row_bias(matmul(O, layer.w_f), layer.b_f);
}

Var stack_forward(const Var& X, std::span<const LayerVars> layers, const AttentionOptions& opts,
                  std::span<const double> mask) {
  if (layers.empty()) throw std::invalid_argument("a stack needs at least one layer");
  Var O = X;
  for (const auto& layer : layers) O = transformer_layer(add(O, X), layer, opts, mask);
  return O;
}

}  // namespace part
