#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "part/tensor.hpp"

namespace part {

/// Half-open pixel box: rows [row_lo, row_hi), cols [col_lo, col_hi).
struct Box {
  std::size_t row_lo = 0;
  std::size_t col_lo = 0;
  std::size_t row_hi = 0;
  std::size_t col_hi = 0;

  std::size_t area() const noexcept { return (row_hi - row_lo) * (col_hi - col_lo); }
  bool contains(std::size_t row, std::size_t col) const noexcept {
    return row >= row_lo && row < row_hi && col >= col_lo && col < col_hi;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

struct PartProposal {
  std::size_t height = 0;
  std::size_t width = 0;
  /// Row-major H x W binary mask, entry y * W + x.
  std::vector<std::uint8_t> mask;
  Box bbox;
  std::size_t source_channel = 0;
  double eta = 0.0;
  /// Set when the proposal came from the top-N fallback and skipped the IoU filter.
  bool fallback = false;

  std::size_t pixel_count() const;
  /// Mask as doubles in flattened pixel order, ready for mask_rows.
  std::vector<double> weights() const;
};

struct PartSet {
  std::vector<PartProposal> parts;
  /// Passes over the ranked channels before the set filled or fell back.
  int passes = 0;
  bool used_fallback = false;
  /// Fewer than N non-degenerate channels were available.
  bool incomplete = false;
};

struct DiscoveryConfig {
  std::size_t N = 4;
  std::size_t R = 64;
  double th = 0.6;
  double mu = 0.5;
  double sigma = 0.1;
  double eta_min = 0.05;
  double eta_max = 0.95;
  double eps = 1e-6;
  int maxiter = 8;

  /// Throws std::invalid_argument on a violated constraint. R larger than the
  /// channel count is allowed; the ranking is simply cut at C.
  void validate(std::size_t channels) const;
  std::size_t effective_range(std::size_t channels) const { return R < channels ? R : channels; }
};

/// v_c = spatial mean of channel c, s_c = v_c / sum_k (v_k + eps). X is {H, W, C}.
std::vector<double> activation_scores(const Tensor& X, double eps);

/// Channel indices by descending score; ties keep ascending channel order.
std::vector<std::size_t> activation_sort(std::span<const double> scores);

/// Gaussian draw clamped into [lo, hi].
double sample_threshold(std::mt19937_64& rng, double mu, double sigma, double lo, double hi);

/// Min-max normalizes an H x W map and keeps pixels >= eta. Returns nullopt for
/// a constant map or an empty mask.
std::optional<PartProposal> roi_crop(std::span<const double> map, std::size_t height,
                                     std::size_t width, double eta);
/// Same, reading channel c of an {H, W, C} feature map.
std::optional<PartProposal> roi_crop(const Tensor& X, std::size_t channel, double eta);

double bbox_iou(const Box& a, const Box& b);

PartSet discover_parts(const Tensor& X, const DiscoveryConfig& cfg, std::mt19937_64& rng);
PartSet discover_parts(const Tensor& X, const DiscoveryConfig& cfg, std::uint64_t seed);

}  // namespace part
