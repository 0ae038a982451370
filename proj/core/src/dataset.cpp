#include "part/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "part/pnm.hpp"

namespace part {

namespace {

constexpr std::array<std::pair<Glyph, Glyph>, 8> pairs{{
    {Glyph::square, Glyph::ring},
    {Glyph::ring, Glyph::square},
    {Glyph::plus, Glyph::cross},
    {Glyph::cross, Glyph::plus},
    {Glyph::square, Glyph::plus},
    {Glyph::plus, Glyph::square},
    {Glyph::ring, Glyph::cross},
    {Glyph::cross, Glyph::ring}}};

void stamp(Tensor& img, std::size_t size, const std::array<std::size_t, 4>& box, Glyph g, std::size_t m) {
  const auto mask = glyph_mask(g, m);
  for (std::size_t y = 0; y < m; ++y)
    for (std::size_t x = 0; x < m; ++x) img[(box[0] + y) * size + box[1] + x] = mask[y * m + x];
}

}  // namespace

void SynthSpec::validate() const {
  if (classes < 2 || classes > pairs.size()) {
    throw std::invalid_argument("synthetic data supports 2 to 8 classes, got " + std::to_string(classes));
  }
  if (motifs != 2) throw std::invalid_argument("synthetic data uses exactly two motifs per class");
  if (per_class == 0) throw std::invalid_argument("need at least one sample per class");
  if (motif_size < 3 || motif_size % 2 == 0 || motif_size + jitter > cell()) {
    throw std::invalid_argument("motif size must be odd, at least 3, and fit in an 8-pixel cell with its jitter");
  }
  if (spacing_min == 0 || spacing_min > spacing_max) {
    throw std::invalid_argument("motif spacing range must satisfy 1 <= min <= max");
  }
  if (cells() < 4 || cell_hi() - cell_lo() < spacing_max || vertical > cell_hi() - cell_lo()) {
    throw std::invalid_argument("image too small for the motif spacing");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("noise must be nonnegative");
  if (!(body_level >= 0.0 && body_level <= 1.0)) throw std::invalid_argument("body level must lie in [0, 1]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
}

std::pair<Glyph, Glyph> class_glyphs(std::size_t k) {
  if (k >= pairs.size()) throw std::out_of_range("class index out of range");
  return pairs[k];
}

std::vector<double> glyph_mask(Glyph g, std::size_t m) {
  std::vector<double> mask(m * m, 0.0);
  const std::size_t c = m / 2;
  for (std::size_t y = 0; y < m; ++y) {
    for (std::size_t x = 0; x < m; ++x) {
      bool on = false;
      switch (g) {
        case Glyph::square: on = true; break;
        case Glyph::ring: on = y == 0 || x == 0 || y + 1 == m || x + 1 == m; break;
        case Glyph::plus: on = y == c || x == c; break;
        case Glyph::cross: on = y == x || y + x + 1 == m; break;
      }
      mask[y * m + x] = on ? 1.0 : 0.0;
    }
  }
  return mask;
}

MotifLayout sample_layout(const SynthSpec& spec, std::size_t k, std::mt19937_64& rng) {
  if (k >= spec.classes) throw std::out_of_range("class index out of range");
  const long lo = static_cast<long>(spec.cell_lo()), hi = static_cast<long>(spec.cell_hi());
  const long v = static_cast<long>(spec.vertical);
  std::uniform_int_distribution<long> spacing(static_cast<long>(spec.spacing_min), static_cast<long>(spec.spacing_max));
  std::uniform_int_distribution<long> rise(-v, v);
  std::uniform_int_distribution<long> cell(lo, hi);
  MotifLayout layout;
  std::tie(layout.first, layout.second) = class_glyphs(k);
  while (true) {
    const long s = spacing(rng), dy = rise(rng);
    const long ax = cell(rng), ay = cell(rng);
    const long bx = ax + s, by = ay + dy;
    if (bx > hi || by < lo || by > hi) continue;
    layout.first_x = static_cast<std::size_t>(ax);
    layout.first_y = static_cast<std::size_t>(ay);
    layout.second_x = static_cast<std::size_t>(bx);
    layout.second_y = static_cast<std::size_t>(by);
    break;
  }
  std::uniform_int_distribution<std::size_t> jit(0, spec.jitter);
  for (auto& j : layout.jitter) j = jit(rng);
  return layout;
}

std::array<std::array<std::size_t, 4>, 2> motif_boxes(const SynthSpec& spec, const MotifLayout& layout) {
  const std::size_t c = spec.cell(), m = spec.motif_size;
  const std::size_t ay = layout.first_y * c + layout.jitter[0], ax = layout.first_x * c + layout.jitter[1];
  const std::size_t by = layout.second_y * c + layout.jitter[2], bx = layout.second_x * c + layout.jitter[3];
  return {{{ay, ax, ay + m, ax + m}, {by, bx, by + m, bx + m}}};
}

Tensor render_template(const SynthSpec& spec, const MotifLayout& layout) {
  const std::size_t S = spec.size;
  Tensor img({S, S, 1});
  for (std::size_t y = 1; y + 1 < S; ++y)
    for (std::size_t x = 1; x + 1 < S; ++x) img[y * S + x] = spec.body_level;
  const auto boxes = motif_boxes(spec, layout);
  stamp(img, S, boxes[0], layout.first, spec.motif_size);
  stamp(img, S, boxes[1], layout.second, spec.motif_size);
  return img;
}

Tensor random_crop(const Tensor& image, std::size_t pad, std::mt19937_64& rng) {
  if (image.rank() != 3) throw DimensionError("image must be {H, W, C}, got " + shape_string(image.shape()));
  if (pad == 0) return image;
  const long H = static_cast<long>(image.extent(0)), W = static_cast<long>(image.extent(1));
  const std::size_t C = image.extent(2);
  std::uniform_int_distribution<long> shift(-static_cast<long>(pad), static_cast<long>(pad));
  const long dy = shift(rng), dx = shift(rng);
  Tensor out(image.shape());
  for (long y = 0; y < H; ++y) {
    const long sy = y + dy;
    if (sy < 0 || sy >= H) continue;
    for (long x = 0; x < W; ++x) {
      const long sx = x + dx;
      if (sx < 0 || sx >= W) continue;
      for (std::size_t c = 0; c < C; ++c)
        out[static_cast<std::size_t>(y * W + x) * C + c] = image[static_cast<std::size_t>(sy * W + sx) * C + c];
    }
  }
  return out;
}

Tensor hflip(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("image must be {H, W, C}, got " + shape_string(image.shape()));
  const std::size_t H = image.extent(0), W = image.extent(1), C = image.extent(2);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) out[(y * W + x) * C + c] = image[(y * W + (W - 1 - x)) * C + c];
  return out;
}

Split generate_dataset(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise > 0.0 ? spec.noise : 1.0);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(spec.per_class)));
  Split out;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Tensor img = render_template(spec, sample_layout(spec, k, rng));
      if (spec.noise > 0.0) {
        for (auto& x : img.values()) x = std::clamp(x + noise(rng), 0.0, 1.0);
      }
      Sample s{std::move(img), static_cast<int>(k)};
      (i < n_train ? out.train : out.test).push_back(std::move(s));
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> group_sampler(std::span<const int> labels, std::size_t batch,
                                                    std::size_t per_class, std::mt19937_64& rng) {
  if (per_class == 0 || batch == 0 || batch % per_class != 0) {
    throw std::invalid_argument("batch size must be a positive multiple of the per-class count");
  }
  const std::size_t classes_per_batch = batch / per_class;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < classes_per_batch) {
    throw std::invalid_argument("need at least " + std::to_string(classes_per_batch) + " classes, have " +
                                std::to_string(by_class.size()));
  }
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < per_class) {
      throw std::invalid_argument("class " + std::to_string(label) + " has fewer than " +
                                  std::to_string(per_class) + " samples");
    }
  }

  // Shuffle each class, cut it into groups of per_class, then repeatedly pick
  // classes_per_batch distinct classes, preferring those with most groups left.
  struct Pool {
    int label;
    std::vector<std::vector<std::size_t>> groups;
  };
  std::vector<Pool> pools;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    Pool pool{label, {}};
    for (std::size_t g = 0; g + per_class <= idx.size(); g += per_class) {
      pool.groups.emplace_back(idx.begin() + static_cast<long>(g), idx.begin() + static_cast<long>(g + per_class));
    }
    pools.push_back(std::move(pool));
  }

  std::vector<std::vector<std::size_t>> batches;
  while (true) {
    std::vector<std::size_t> order(pools.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return pools[a].groups.size() > pools[b].groups.size();
    });
    if (pools[order[classes_per_batch - 1]].groups.empty()) break;
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < classes_per_batch; ++c) {
      auto& groups = pools[order[c]].groups;
      out.insert(out.end(), groups.back().begin(), groups.back().end());
      groups.pop_back();
    }
    batches.push_back(std::move(out));
  }
  return batches;
}

void save_dataset(const std::filesystem::path& root, std::span<const Sample> samples) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write " + (root / "manifest.csv").string());
  manifest << "path,label\n";
  std::map<int, std::size_t> counter;
  for (const auto& s : samples) {
    const fs::path rel = fs::path(std::to_string(s.label)) / (std::to_string(counter[s.label]++) + ".pgm");
    fs::create_directories(root / rel.parent_path());
    save_pgm(root / rel, s.image);
    manifest << rel.generic_string() << ',' << s.label << '\n';
  }
  if (!manifest) throw std::runtime_error("failed writing manifest");
}

std::vector<Sample> load_dataset(const std::filesystem::path& root) {
  std::ifstream manifest(root / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot open " + (root / "manifest.csv").string());
  std::string line;
  std::getline(manifest, line);
  if (line != "path,label") throw std::runtime_error("manifest.csv must start with 'path,label'");
  std::vector<Sample> out;
  std::size_t lineno = 1;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("manifest.csv line " + std::to_string(lineno) + ": expected path,label");
    }
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::runtime_error("manifest.csv line " + std::to_string(lineno) + ": bad label");
    }
    if (label < 0) throw std::runtime_error("manifest.csv line " + std::to_string(lineno) + ": negative label");
    Tensor img = load_pgm(root / line.substr(0, comma));
    out.push_back({std::move(img), label});
  }
  return out;
}

Split split_by_index(std::vector<Sample> samples, double train_fraction) {
  std::map<int, std::size_t> totals, seen;
  for (const auto& s : samples) ++totals[s.label];
  Split out;
  for (auto& s : samples) {
    const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(totals[s.label])));
    (seen[s.label]++ < cut ? out.train : out.test).push_back(std::move(s));
  }
  return out;
}

}  // namespace part
