#include "part/train.hpp"

#include <memory>
#include <stdexcept>

#include "part/parallel.hpp"

namespace part {

namespace {

enum SeedStream : std::uint64_t { sampler_stream = 1, discovery_stream = 2, augment_stream = 3 };

}  // namespace

Tensor augment(const Tensor& image, std::size_t crop_pad, bool flip, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor out = random_crop(image, crop_pad, rng);
  if (flip && std::bernoulli_distribution(0.5)(rng)) out = hflip(out);
  return out;
}

double accumulate_batch(PartModel& model, std::span<const Sample* const> batch,
                        const DiscoveryConfig& discovery, std::uint64_t step_seed, std::size_t threads,
                        std::size_t crop_pad, bool flip) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t b = batch.size();
  std::vector<std::unique_ptr<Tape>> tapes(b);
  std::vector<double> losses(b, 0.0);

  parallel_for(b, threads, [&](std::size_t i) {
    auto tape = std::make_unique<Tape>();
    const ModelVars vars = bind(*tape, model, model.has_part_branches());
    const bool augmented = crop_pad > 0 || flip;
    const Tensor image =
        augmented ? augment(batch[i]->image, crop_pad, flip, derive_seed(step_seed, augment_stream, i)) : Tensor{};
    const Features f = backbone_forward(model, vars, augmented ? image : batch[i]->image);
    PartSet parts;
    if (model.has_part_branches()) {
      parts = discover_parts(part_feature_map(f), discovery, derive_seed(step_seed, discovery_stream, i));
    }
    const LossTerms terms = total_loss(model, vars, f, batch[i]->label, parts);
    tape->backward(terms.total);
    losses[i] = terms.total.value()[0];
    tapes[i] = std::move(tape);
  });

  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    tapes[i]->flush_param_grads(1.0 / static_cast<double>(b));
    total += losses[i];
  }
  return total / static_cast<double>(b);
}

double evaluate(PartModel& model, std::span<const Sample> samples, std::size_t threads) {
  if (samples.empty()) return 0.0;
  std::vector<int> hit(samples.size(), 0);
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    hit[i] = predict(model, samples[i].image) == samples[i].label ? 1 : 0;
  });
  std::size_t correct = 0;
  for (int h : hit) correct += static_cast<std::size_t>(h);
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

Trainer::Trainer(PartModel& model, const TrainConfig& train, const DiscoveryConfig& discovery)
    : model_(model),
      cfg_(train),
      discovery_(discovery),
      optimizer_(train.optimizer, model.parameters(), train.momentum, train.weight_decay),
      schedule_{train.lr, train.lr_period, train.lr_factor},
      sampler_rng_(derive_seed(train.seed, sampler_stream)) {
  if (train.lr_period <= 0) throw std::invalid_argument("lr period must be positive");
}

bool Trainer::done() const {
  return epoch_ >= cfg_.epochs || (cfg_.max_steps != 0 && steps_ >= cfg_.max_steps);
}

EpochMetrics Trainer::run_epoch(std::span<const Sample> train, std::span<const Sample> test) {
  std::vector<int> labels;
  labels.reserve(train.size());
  for (const auto& s : train) labels.push_back(s.label);
  const auto batches = group_sampler(labels, cfg_.batch, cfg_.per_class, sampler_rng_);

  const double lr = schedule_(static_cast<int>(epoch_));
  EpochMetrics m;
  m.epoch = epoch_;
  double loss_sum = 0.0;
  for (const auto& batch : batches) {
    if (cfg_.max_steps != 0 && steps_ >= cfg_.max_steps) break;
    std::vector<const Sample*> members;
    for (std::size_t idx : batch) members.push_back(&train[idx]);
    optimizer_.zero_grad();
    loss_sum += accumulate_batch(model_, members, discovery_, derive_seed(cfg_.seed, discovery_stream, steps_),
                                 cfg_.threads, cfg_.crop_pad, cfg_.hflip);
    optimizer_.step(lr);
    ++steps_;
    ++m.steps;
  }
  m.loss = m.steps ? loss_sum / static_cast<double>(m.steps) : 0.0;
  m.top1 = evaluate(model_, test, cfg_.threads);
  ++epoch_;
  return m;
}

std::vector<EpochMetrics> Trainer::fit(std::span<const Sample> train, std::span<const Sample> test,
                                       const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> history;
  while (!done()) {
    history.push_back(run_epoch(train, test));
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

}  // namespace part
