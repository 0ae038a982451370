#include "part/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace part {

namespace {

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

LayerShape layer_shape(const ModelConfig& cfg, std::size_t heads, std::size_t gw, std::size_t gh) {
  LayerShape s;
  s.channels = cfg.channels;
  s.heads = heads;
  s.head_dim = cfg.head_dim;
  s.mode = cfg.pos;
  s.learnable_encoding = cfg.learnable_encoding;
  s.grid_w = gw;
  s.grid_h = gh;
  return s;
}

}  // namespace

void ModelConfig::validate() const {
  if (classes < 2) throw std::invalid_argument("model needs at least two classes");
  if (in_channels == 0 || channels == 0) throw std::invalid_argument("channel counts must be positive");
  if (widths.empty()) throw std::invalid_argument("backbone needs at least one stage");
  if (relation) {
    if (heads_global == 0 || heads_part == 0) throw std::invalid_argument("head counts must be positive");
    if (stack_global == 0) throw std::invalid_argument("stack_global must be at least 1");
    if (parts > 0 && stack_part == 0) throw std::invalid_argument("stack_part must be at least 1");
    if (head_dim == 0 && (channels % heads_global != 0 || channels % heads_part != 0)) {
      throw std::invalid_argument("channels must be divisible by the head counts");
    }
  }
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
}

std::size_t backbone_extent(std::size_t n, std::size_t stages) {
  for (std::size_t s = 0; s < stages; ++s) n = (n + 1) / 2;
  return n;
}

PartModel::PartModel(const ModelConfig& cfg, std::size_t image_h, std::size_t image_w, std::uint64_t seed)
    : cfg_(cfg), image_h_(image_h), image_w_(image_w) {
  cfg_.validate();
  const std::size_t min_extent = std::size_t{1} << cfg_.widths.size();
  if (image_h < min_extent || image_w < min_extent) {
    throw std::invalid_argument("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                                " is smaller than " + std::to_string(min_extent) + "x" +
                                std::to_string(min_extent));
  }
  grid_h_ = backbone_extent(image_h, cfg_.widths.size());
  grid_w_ = backbone_extent(image_w, cfg_.widths.size());
  std::mt19937_64 rng(seed);
  const double gain = cfg_.init_gain;

  std::size_t cin = cfg_.in_channels;
  for (std::size_t width : cfg_.widths) {
    backbone.kernels.push_back(uniform({3, 3, cin, width}, 9 * cin, gain, rng));
    backbone.biases.push_back(zeros({width}));
    cin = width;
  }
  backbone.head_g = uniform({cin, cfg_.channels}, cin, gain, rng);
  backbone.bias_g = zeros({1, cfg_.channels});
  backbone.head_p = uniform({cin, cfg_.channels}, cin, gain, rng);
  backbone.bias_p = zeros({1, cfg_.channels});

  if (cfg_.relation) {
    if (cfg_.pos == PosMode::relative) {
      table_ = std::make_shared<const OffsetTable>(OffsetTable::sinusoid(grid_w_, grid_h_, cfg_.channels));
    }
    const auto gshape = layer_shape(cfg_, cfg_.heads_global, grid_w_, grid_h_);
    for (std::size_t t = 0; t < cfg_.stack_global; ++t) global_stack.push_back(init_layer(gshape, rng, gain));
    const auto pshape = layer_shape(cfg_, cfg_.heads_part, grid_w_, grid_h_);
    for (std::size_t p = 0; p < cfg_.parts; ++p) {
      std::vector<LayerParams> stack;
      for (std::size_t t = 0; t < cfg_.stack_part; ++t) stack.push_back(init_layer(pshape, rng, gain));
      part_stacks.push_back(std::move(stack));
    }
  }
  w_g = uniform({cfg_.channels, cfg_.classes}, cfg_.channels, gain, rng);
  if (has_part_branches()) {
    const std::size_t n = cfg_.per_part_classifier ? cfg_.parts : 1;
    for (std::size_t i = 0; i < n; ++i) w_l.push_back(uniform({cfg_.channels, cfg_.classes}, cfg_.channels, gain, rng));
    lambda.assign(cfg_.parts, cfg_.lambda);
  }
}

void PartModel::drop_part_branches() {
  part_stacks.clear();
  w_l.clear();
  lambda.clear();
}

std::vector<std::pair<std::string, Tensor*>> PartModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t s = 0; s < backbone.kernels.size(); ++s) {
    out.emplace_back("backbone.conv" + std::to_string(s) + ".kernel", &backbone.kernels[s]);
    out.emplace_back("backbone.conv" + std::to_string(s) + ".bias", &backbone.biases[s]);
  }
  out.emplace_back("backbone.head_g", &backbone.head_g);
  out.emplace_back("backbone.bias_g", &backbone.bias_g);
  out.emplace_back("backbone.head_p", &backbone.head_p);
  out.emplace_back("backbone.bias_p", &backbone.bias_p);
  for (std::size_t t = 0; t < global_stack.size(); ++t) collect(global_stack[t], "global.layer" + std::to_string(t), out);
  for (std::size_t p = 0; p < part_stacks.size(); ++p)
    for (std::size_t t = 0; t < part_stacks[p].size(); ++t)
      collect(part_stacks[p][t], "part" + std::to_string(p) + ".layer" + std::to_string(t), out);
  out.emplace_back("classifier.w_g", &w_g);
  for (std::size_t i = 0; i < w_l.size(); ++i) out.emplace_back("classifier.w_l" + std::to_string(i), &w_l[i]);
  return out;
}

std::vector<Tensor*> PartModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<NamedTensor> PartModel::state() {
  std::vector<NamedTensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back({name, Tensor(t->shape(), t->data())});
  return out;
}

void PartModel::load_state(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.tensor;
  const auto params = named_parameters();
  if (params.size() != by_name.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  for (const auto& [name, t] : params) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second->shape() != t->shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_string(it->second->shape()) +
                            ", model expects " + shape_string(t->shape()));
    }
    std::copy(it->second->values().begin(), it->second->values().end(), t->values().begin());
  }
}

ModelVars bind(PartModel& model, const LeafFn& leaf, bool with_parts) {
  ModelVars v;
  const PosMode mode = model.config().pos;
  for (std::size_t s = 0; s < model.backbone.kernels.size(); ++s) {
    v.kernels.push_back(leaf(model.backbone.kernels[s]));
    v.biases.push_back(leaf(model.backbone.biases[s]));
  }
  v.head_g = leaf(model.backbone.head_g);
  v.bias_g = leaf(model.backbone.bias_g);
  v.head_p = leaf(model.backbone.head_p);
  v.bias_p = leaf(model.backbone.bias_p);
  for (auto& layer : model.global_stack) v.global_stack.push_back(bind(leaf, layer, mode));
  v.w_g = leaf(model.w_g);
  if (with_parts) {
    for (auto& stack : model.part_stacks) {
      std::vector<LayerVars> layers;
      for (auto& layer : stack) layers.push_back(bind(leaf, layer, mode));
      v.part_stacks.push_back(std::move(layers));
    }
    for (auto& w : model.w_l) v.w_l.push_back(leaf(w));
  }
  return v;
}

ModelVars bind(Tape& tape, PartModel& model, bool with_parts) {
  return bind(model, [&tape](Tensor& t) { return tape.leaf(t); }, with_parts);
}

Features backbone_forward(const PartModel& model, const ModelVars& vars, const Tensor& image) {
  const std::size_t stages = vars.kernels.size();
  const std::size_t min_extent = std::size_t{1} << stages;
  if (image.rank() != 3 || image.extent(2) != model.config().in_channels) {
    throw DimensionError("image must be {H, W, " + std::to_string(model.config().in_channels) + "}, got " +
                         shape_string(image.shape()));
  }
  if (image.extent(0) < min_extent || image.extent(1) < min_extent) {
    throw std::invalid_argument("image " + shape_string(image.shape()) + " is smaller than " +
                                std::to_string(min_extent) + "x" + std::to_string(min_extent));
  }
  Tape& tape = *vars.w_g.tape();
  Var x = tape.constant(image);
  for (std::size_t s = 0; s < stages; ++s) x = relu(conv2d(x, vars.kernels[s], vars.biases[s], 2, 1));
  Features f;
  f.h = x.shape()[0];
  f.w = x.shape()[1];
  const Var flat = reshape(x, {f.h * f.w, x.shape()[2]});
  f.xg = add_row_bias(matmul(flat, vars.head_g), vars.bias_g);
  f.xp = relu(add_row_bias(matmul(flat, vars.head_p), vars.bias_p));
  return f;
}

AttentionOptions attention_options(const PartModel& model) {
  AttentionOptions opts;
  opts.mode = model.config().pos;
  opts.table = model.table();
  opts.mask_logits = model.config().mask_logits;
  return opts;
}

Var global_branch(const PartModel& model, const ModelVars& vars, const Var& xg) {
  Var O = xg;
  if (!vars.global_stack.empty()) O = stack_forward(xg, vars.global_stack, attention_options(model));
  return matmul(mean_rows(O), vars.w_g);
}

Var part_branch(const PartModel& model, const ModelVars& vars, std::size_t index, const Var& xp,
                const PartProposal& part) {
  if (index >= vars.part_stacks.size()) throw std::out_of_range("part branch index out of range");
  const std::vector<double> mask = part.weights();
  if (mask.size() != xp.rows()) {
    throw DimensionError("part mask covers " + std::to_string(mask.size()) + " pixels, features have " +
                         std::to_string(xp.rows()));
  }
  const std::size_t count = part.pixel_count();
  if (count == 0) return {};
  const Var O = stack_forward(xp, vars.part_stacks[index], attention_options(model), mask);
  std::vector<double> weights(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) weights[i] = mask[i] / static_cast<double>(count);
  const Var& w = vars.w_l.size() == 1 ? vars.w_l[0] : vars.w_l[index];
  return matmul(weighted_row_sum(O, weights), w);
}

LossTerms total_loss(const PartModel& model, const ModelVars& vars, const Features& features, int label,
                     const PartSet& parts) {
  const int labels[] = {label};
  LossTerms out;
  out.global_ce = cross_entropy(global_branch(model, vars, features.xg), labels);
  out.total = out.global_ce;
  const std::size_t branches = std::min(parts.parts.size(), vars.part_stacks.size());
  for (std::size_t p = 0; p < branches; ++p) {
    const Var logits = part_branch(model, vars, p, features.xp, parts.parts[p]);
    if (!logits.valid()) {
      ++out.skipped;
      out.part_ce.emplace_back();
      continue;
    }
    const Var ce = cross_entropy(logits, labels);
    out.part_ce.push_back(ce);
    out.total = add(out.total, scale(ce, model.lambda.at(p)));
  }
  return out;
}

Tensor part_feature_map(const Features& features) {
  return features.xp.value().reshaped({features.h, features.w, features.xp.cols()});
}

std::vector<double> global_logits(PartModel& model, const Tensor& image) {
  Tape tape;
  const ModelVars vars = bind(tape, model, false);
  const Features f = backbone_forward(model, vars, image);
  const Var logits = global_branch(model, vars, f.xg);
  return logits.value().data();
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of an empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int predict(PartModel& model, const Tensor& image) { return argmax(global_logits(model, image)); }

Tensor grad_cam_map(const Tensor& activation, std::span<const double> gradient) {
  if (activation.rank() != 3) throw DimensionError("grad_cam expects an {h, w, C} activation");
  if (gradient.size() != activation.size()) throw DimensionError("gradient does not match the activation");
  const std::size_t h = activation.extent(0), w = activation.extent(1), C = activation.extent(2);
  const std::size_t n = h * w;
  std::vector<double> weights(C, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) weights[c] += gradient[i * C + c];
  for (auto& wc : weights) wc /= static_cast<double>(n);

  Tensor map({h, w});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < C; ++c) acc += weights[c] * activation[i * C + c];
    map[i] = std::max(acc, 0.0);
  }
  const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
  const double mn = *lo, mx = *hi;
  if (mx > mn) {
    for (auto& x : map.values()) x = (x - mn) / (mx - mn);
  } else {
    std::fill(map.values().begin(), map.values().end(), 0.0);
  }
  return map;
}

CamSource parse_cam_source(const std::string& name) {
  if (name == "part") return CamSource::part;
  if (name == "global") return CamSource::global;
  throw std::invalid_argument("unknown cam source '" + name + "'");
}

Tensor grad_cam(PartModel& model, const Tensor& image, int k, CamSource source,
                const DiscoveryConfig& discovery, std::uint64_t seed) {
  if (k < 0 || static_cast<std::size_t>(k) >= model.config().classes) {
    throw std::invalid_argument("class " + std::to_string(k) + " out of range");
  }
  Tape tape;
  const ModelVars vars = bind(tape, model, source == CamSource::part);
  const Features f = backbone_forward(model, vars, image);
  const Var tap = source == CamSource::part ? f.xp : f.xg;

  // Select logit k with a constant one-hot column so the score stays on the tape.
  Tensor pick({model.config().classes, 1});
  pick[static_cast<std::size_t>(k)] = 1.0;
  const Var onehot = tape.constant(pick);

  Var score;
  if (source == CamSource::global) {
    score = matmul(global_branch(model, vars, f.xg), onehot);
  } else if (!vars.part_stacks.empty()) {
    const PartSet parts = discover_parts(part_feature_map(f), discovery, seed);
    const std::size_t branches = std::min(parts.parts.size(), vars.part_stacks.size());
    for (std::size_t p = 0; p < branches; ++p) {
      const Var logits = part_branch(model, vars, p, f.xp, parts.parts[p]);
      if (!logits.valid()) continue;
      const Var s = matmul(logits, onehot);
      score = score.valid() ? add(score, s) : s;
    }
  }

  const Tensor activation = tap.value().reshaped({f.h, f.w, tap.cols()});
  if (!score.valid()) return grad_cam_map(activation, std::vector<double>(activation.size(), 0.0));
  tape.backward(score);
  const auto g = tap.grad();
  if (g.empty()) return grad_cam_map(activation, std::vector<double>(activation.size(), 0.0));
  return grad_cam_map(activation, g);
}

}  // namespace part
