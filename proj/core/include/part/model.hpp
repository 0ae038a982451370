#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "part/autodiff.hpp"
#include "part/checkpoint.hpp"
#include "part/discovery.hpp"
#include "part/encoding.hpp"
#include "part/transformer.hpp"

namespace part {

struct ModelConfig {
  std::size_t classes = 8;
  std::size_t in_channels = 1;
  std::vector<std::size_t> widths{8, 16, 32};
  std::size_t channels = 32;
  std::size_t heads_global = 4;
  std::size_t heads_part = 1;
  std::size_t stack_global = 3;
  std::size_t stack_part = 1;
  std::size_t head_dim = 0;
  PosMode pos = PosMode::relative;
  bool learnable_encoding = false;
  bool mask_logits = false;
  /// false drops every transformer stack: the global branch pools X^g directly
  /// and no part branches exist.
  bool relation = true;
  std::size_t parts = 4;
  double lambda = 0.1;
  bool per_part_classifier = false;
  double init_gain = 1.0;

  void validate() const;
};

struct BackboneParams {
  std::vector<Tensor> kernels;  // {3, 3, Cin, Cout}, stride 2, pad 1
  std::vector<Tensor> biases;
  Tensor head_g, bias_g;  // 1x1 projection to X^g: Cl x C, 1 x C
  Tensor head_p, bias_p;  // 1x1 projection to X^p
};

/// Spatial size after the three stride-2 stages.
std::size_t backbone_extent(std::size_t n, std::size_t stages);

class PartModel {
 public:
  PartModel(const ModelConfig& cfg, std::size_t image_h, std::size_t image_w, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::size_t image_h() const noexcept { return image_h_; }
  std::size_t image_w() const noexcept { return image_w_; }
  std::size_t grid_h() const noexcept { return grid_h_; }
  std::size_t grid_w() const noexcept { return grid_w_; }
  const OffsetTable* table() const noexcept { return table_.get(); }

  BackboneParams backbone;
  std::vector<LayerParams> global_stack;
  std::vector<std::vector<LayerParams>> part_stacks;
  Tensor w_g;               // C x K
  std::vector<Tensor> w_l;  // one shared C x K, or one per part
  std::vector<double> lambda;

  bool has_part_branches() const noexcept { return !part_stacks.empty(); }
  /// Removes part stacks and part classifiers; inference must not notice.
  void drop_part_branches();

  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();

  std::vector<NamedTensor> state();
  /// Restores tensors by name; throws CheckpointError on a missing name or a
  /// shape mismatch.
  void load_state(const std::vector<NamedTensor>& tensors);

 private:
  ModelConfig cfg_;
  std::size_t image_h_ = 0, image_w_ = 0, grid_h_ = 0, grid_w_ = 0;
  std::shared_ptr<const OffsetTable> table_;
};

/// Model parameters recorded on one tape.
struct ModelVars {
  std::vector<Var> kernels, biases;
  Var head_g, bias_g, head_p, bias_p;
  std::vector<LayerVars> global_stack;
  std::vector<std::vector<LayerVars>> part_stacks;
  Var w_g;
  std::vector<Var> w_l;
};

ModelVars bind(Tape& tape, PartModel& model, bool with_parts = true);
ModelVars bind(PartModel& model, const LeafFn& leaf, bool with_parts = true);

struct Features {
  Var xg;  // (h*w) x C
  Var xp;  // (h*w) x C, nonnegative
  std::size_t h = 0, w = 0;
};

/// Image {H, W, Cin} with values in [0, 1].
Features backbone_forward(const PartModel& model, const ModelVars& vars, const Tensor& image);

AttentionOptions attention_options(const PartModel& model);

/// Global stack, mean pool over pixels, w_g. Returns 1 x K.
Var global_branch(const PartModel& model, const ModelVars& vars, const Var& xg);

/// Masked stack on X^p, mean pool over in-mask pixels, w_l. Returns 1 x K, or
/// an invalid Var when the mask is empty.
Var part_branch(const PartModel& model, const ModelVars& vars, std::size_t index, const Var& xp,
                const PartProposal& part);

struct LossTerms {
  Var total;
  Var global_ce;
  std::vector<Var> part_ce;  // invalid entries for skipped branches
  std::size_t skipped = 0;
};

/// CE(global) + sum_p lambda_p CE(part p), every part carrying the image label.
LossTerms total_loss(const PartModel& model, const ModelVars& vars, const Features& features, int label,
                     const PartSet& parts);

/// Part discovery input: X^p as an {h, w, C} feature map.
Tensor part_feature_map(const Features& features);

/// Global-branch logits only; part branches are never touched.
std::vector<double> global_logits(PartModel& model, const Tensor& image);
/// Argmax of the global logits, ties to the lowest index.
int predict(PartModel& model, const Tensor& image);
int argmax(std::span<const double> v);

/// Grad-CAM from an activation {h, w, C} and the gradient of a score with
/// respect to it: weights are the spatial means of the gradient, the map is
/// ReLU of the weighted channel sum, min-max scaled to [0, 1]. Returns {h, w}.
Tensor grad_cam_map(const Tensor& activation, std::span<const double> gradient);

enum class CamSource {
  part,    // X^p, scored by the sum of the part-branch logits
  global,  // X^g, scored by the global logit
};

CamSource parse_cam_source(const std::string& name);

Tensor grad_cam(PartModel& model, const Tensor& image, int k, CamSource source,
                const DiscoveryConfig& discovery, std::uint64_t seed);

}  // namespace part
