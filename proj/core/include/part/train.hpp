#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "part/dataset.hpp"
#include "part/discovery.hpp"
#include "part/model.hpp"
#include "part/optim.hpp"

namespace part {

struct TrainConfig {
  std::size_t epochs = 120;
  std::size_t batch = 16;
  std::size_t per_class = 4;
  double lr = 8e-4;
  int lr_period = 60;
  double lr_factor = 0.1;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.0;
  double weight_decay = 0.0;
  /// Random-crop padding in pixels; 0 disables the augmentation.
  std::size_t crop_pad = 0;
  /// Mirror each training image with probability 1/2. Only label-preserving
  /// when classes are symmetric under the flip.
  bool hflip = false;
  /// Stop after this many optimizer steps; 0 means no limit.
  std::size_t max_steps = 0;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean batch loss over the epoch's steps
  double top1 = 0.0;  // test accuracy after the epoch
  std::size_t steps = 0;
};

/// Training-time augmentation of one image, seeded per sample.
Tensor augment(const Tensor& image, std::size_t crop_pad, bool flip, std::uint64_t seed);

/// Mean total loss of a batch; gradients are accumulated on the parameters.
/// Samples run on separate tapes (in parallel when threads > 1) and their
/// gradients are added in batch order, so results do not depend on threads.
double accumulate_batch(PartModel& model, std::span<const Sample* const> batch,
                        const DiscoveryConfig& discovery, std::uint64_t step_seed, std::size_t threads,
                        std::size_t crop_pad = 0, bool flip = false);

double evaluate(PartModel& model, std::span<const Sample> samples, std::size_t threads);

class Trainer {
 public:
  Trainer(PartModel& model, const TrainConfig& train, const DiscoveryConfig& discovery);

  /// One epoch of group-sampled batches followed by a test evaluation.
  EpochMetrics run_epoch(std::span<const Sample> train, std::span<const Sample> test);
  /// Runs epochs until cfg.epochs or cfg.max_steps; calls on_epoch after each.
  std::vector<EpochMetrics> fit(std::span<const Sample> train, std::span<const Sample> test,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

  std::size_t steps() const noexcept { return steps_; }
  bool done() const;

 private:
  PartModel& model_;
  TrainConfig cfg_;
  DiscoveryConfig discovery_;
  Optimizer optimizer_;
  StepSchedule schedule_;
  std::mt19937_64 sampler_rng_;
  std::size_t epoch_ = 0;
  std::size_t steps_ = 0;
};

}  // namespace part
