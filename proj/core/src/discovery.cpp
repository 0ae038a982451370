#include "part/discovery.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace part {

namespace {

void require_feature_map(const Tensor& X) {
  if (X.rank() != 3) throw DimensionError("feature map must be {H, W, C}, got " + shape_string(X.shape()));
}

}  // namespace

std::size_t PartProposal::pixel_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<double> PartProposal::weights() const { return {mask.begin(), mask.end()}; }

void DiscoveryConfig::validate(std::size_t channels) const {
  if (N == 0) throw std::invalid_argument("parts.N must be positive");
  if (N > R) throw std::invalid_argument("parts.N must not exceed parts.R");
  if (N > channels) throw std::invalid_argument("parts.N exceeds the channel count");
  if (!(th >= 0.0 && th <= 1.0)) throw std::invalid_argument("parts.th must lie in [0, 1]");
  if (!(eta_min > 0.0 && eta_min < eta_max && eta_max < 1.0)) {
    throw std::invalid_argument("need 0 < parts.eta_min < parts.eta_max < 1");
  }
  if (!(sigma >= 0.0)) throw std::invalid_argument("parts.sigma must be nonnegative");
  if (!(eps > 0.0)) throw std::invalid_argument("parts.eps must be positive");
  if (maxiter < 1) throw std::invalid_argument("parts.maxiter must be at least 1");
}

std::vector<double> activation_scores(const Tensor& X, double eps) {
  require_feature_map(X);
  const std::size_t hw = X.extent(0) * X.extent(1), C = X.extent(2);
  std::vector<double> v(C, 0.0);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < C; ++c) v[c] += X[p * C + c];
  double denom = 0.0;
  for (auto& vc : v) {
    vc /= static_cast<double>(hw);
    denom += vc + eps;
  }
  for (auto& vc : v) vc /= denom;
  return v;
}

std::vector<std::size_t> activation_sort(std::span<const double> scores) {
  std::vector<std::size_t> perm(scores.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return perm;
}

double sample_threshold(std::mt19937_64& rng, double mu, double sigma, double lo, double hi) {
  double eta = mu;
  if (sigma > 0.0) eta = std::normal_distribution<double>(mu, sigma)(rng);
  return std::clamp(eta, lo, hi);
}

std::optional<PartProposal> roi_crop(std::span<const double> map, std::size_t height,
                                     std::size_t width, double eta) {
  if (map.size() != height * width) throw DimensionError("roi_crop: map size does not match H x W");
  const auto [lo_it, hi_it] = std::minmax_element(map.begin(), map.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return std::nullopt;

  PartProposal p;
  p.height = height;
  p.width = width;
  p.eta = eta;
  p.mask.assign(map.size(), 0);
  Box box{height, width, 0, 0};
  bool any = false;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double normalized = (map[y * width + x] - lo) / (hi - lo);
      if (normalized < eta) continue;
      p.mask[y * width + x] = 1;
      any = true;
      box.row_lo = std::min(box.row_lo, y);
      box.col_lo = std::min(box.col_lo, x);
      box.row_hi = std::max(box.row_hi, y + 1);
      box.col_hi = std::max(box.col_hi, x + 1);
    }
  }
  if (!any) return std::nullopt;
  p.bbox = box;
  return p;
}

std::optional<PartProposal> roi_crop(const Tensor& X, std::size_t channel, double eta) {
  require_feature_map(X);
  const std::size_t H = X.extent(0), W = X.extent(1), C = X.extent(2);
  if (channel >= C) throw std::out_of_range("roi_crop: channel out of range");
  std::vector<double> map(H * W);
  for (std::size_t p = 0; p < H * W; ++p) map[p] = X[p * C + channel];
  auto out = roi_crop(map, H, W, eta);
  if (out) out->source_channel = channel;
  return out;
}

double bbox_iou(const Box& a, const Box& b) {
  const std::size_t r0 = std::max(a.row_lo, b.row_lo), r1 = std::min(a.row_hi, b.row_hi);
  const std::size_t c0 = std::max(a.col_lo, b.col_lo), c1 = std::min(a.col_hi, b.col_hi);
  const double inter = (r0 < r1 && c0 < c1) ? static_cast<double>((r1 - r0) * (c1 - c0)) : 0.0;
  const double uni = static_cast<double>(a.area() + b.area()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

PartSet discover_parts(const Tensor& X, const DiscoveryConfig& cfg, std::mt19937_64& rng) {
  require_feature_map(X);
  const std::size_t C = X.extent(2);
  cfg.validate(C);
  const std::size_t range = cfg.effective_range(C);

  PartSet out;
  auto sample = [&] { return sample_threshold(rng, cfg.mu, cfg.sigma, cfg.eta_min, cfg.eta_max); };

  std::vector<std::size_t> ranked;
  while (out.parts.size() < cfg.N) {
    // Scores are recomputed every pass; within one call the features do not change.
    ranked = activation_sort(activation_scores(X, cfg.eps));
    ranked.resize(range);
    for (std::size_t r = 0; r < range && out.parts.size() < cfg.N; ++r) {
      const double eta = sample();
      auto proposal = roi_crop(X, ranked[r], eta);
      if (!proposal) continue;
      const bool legal = std::all_of(out.parts.begin(), out.parts.end(), [&](const PartProposal& q) {
        return bbox_iou(q.bbox, proposal->bbox) <= cfg.th;
      });
      if (legal) out.parts.push_back(std::move(*proposal));
    }
    ++out.passes;
    if (out.passes >= cfg.maxiter && out.parts.size() < cfg.N) break;
  }

  if (out.parts.size() < cfg.N) {
    out.used_fallback = true;
    for (std::size_t r = 0; r < range && out.parts.size() < cfg.N; ++r) {
      auto proposal = roi_crop(X, ranked[r], sample());
      if (!proposal) continue;
      proposal->fallback = true;
      out.parts.push_back(std::move(*proposal));
    }
    out.incomplete = out.parts.size() < cfg.N;
  }
  return out;
}

PartSet discover_parts(const Tensor& X, const DiscoveryConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return discover_parts(X, cfg, rng);
}

}  // namespace part
