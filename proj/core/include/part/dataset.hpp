#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "part/tensor.hpp"

namespace part {

struct Sample {
  Tensor image;  // {H, W, 1}, values in [0, 1]
  int label = 0;
};

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Every image shows the same flat rectangle ("body"). Each class stamps an
/// ordered pair of m x m glyphs (square, ring, plus, cross) side by side on an
/// 8-pixel cell lattice: the first glyph on the left, the second 2 or 3 cells to
/// its right and up to one cell higher or lower. Every glyph appears in several
/// classes, so a class is identified only by which glyph sits left of which.
/// Both cells stay one cell away from the border so that backbone features
/// near a motif do not depend on where the motif is.
struct SynthSpec {
  std::size_t classes = 8;
  std::size_t per_class = 40;
  std::size_t size = 48;
  std::size_t motifs = 2;
  std::size_t motif_size = 5;
  double noise = 0.05;
  std::uint64_t seed = 0;
  /// Horizontal lattice distance between the two glyphs, drawn uniformly.
  std::size_t spacing_min = 2;
  std::size_t spacing_max = 3;
  /// Largest vertical lattice offset of the second glyph.
  std::size_t vertical = 1;
  /// Extra random offset, in pixels, of each glyph inside its cell.
  std::size_t jitter = 1;
  double body_level = 0.5;
  double train_fraction = 0.8;

  void validate() const;
  std::size_t cell() const { return 8; }
  std::size_t cells() const { return size / cell(); }
  /// Lattice cells usable for glyphs along each axis: [1, cells() - 2].
  std::size_t cell_lo() const { return 1; }
  std::size_t cell_hi() const { return cells() - 2; }
};

enum class Glyph { square, ring, plus, cross };

/// Left and right glyph of class k.
std::pair<Glyph, Glyph> class_glyphs(std::size_t k);

/// Where the glyphs of one sample sit: lattice cells and per-glyph pixel jitter.
struct MotifLayout {
  Glyph first = Glyph::square, second = Glyph::ring;
  std::size_t first_x = 0, first_y = 0;
  std::size_t second_x = 0, second_y = 0;
  std::array<std::size_t, 4> jitter{};  // first (y, x), second (y, x)
};

/// Draws a valid layout for class k.
MotifLayout sample_layout(const SynthSpec& spec, std::size_t k, std::mt19937_64& rng);

/// m x m binary mask of a glyph, row-major.
std::vector<double> glyph_mask(Glyph g, std::size_t m);

/// Noise-free image for a layout.
Tensor render_template(const SynthSpec& spec, const MotifLayout& layout);

/// Pixel boxes (row_lo, col_lo, row_hi, col_hi) covered by the two glyphs.
std::array<std::array<std::size_t, 4>, 2> motif_boxes(const SynthSpec& spec, const MotifLayout& layout);

/// Random crop of the image zero-padded by `pad` on every side, back at the
/// original size: a translation by up to `pad` pixels along each axis.
Tensor random_crop(const Tensor& image, std::size_t pad, std::mt19937_64& rng);

/// Mirror image across the vertical axis.
Tensor hflip(const Tensor& image);

/// Deterministic in spec.seed. Within each class, sample index i goes to the
/// training split when i < floor(train_fraction * per_class).
Split generate_dataset(const SynthSpec& spec);

/// Batches of batch / per_class distinct classes, per_class samples each.
/// Samples are drawn without replacement; classes that cannot fill another
/// group are left out for the rest of the epoch.
std::vector<std::vector<std::size_t>> group_sampler(std::span<const int> labels, std::size_t batch,
                                                    std::size_t per_class, std::mt19937_64& rng);

/// `<root>/<label>/<index>.pgm` plus `<root>/manifest.csv` with `path,label`.
void save_dataset(const std::filesystem::path& root, std::span<const Sample> samples);
/// Reads manifest.csv and every listed image, in manifest order.
std::vector<Sample> load_dataset(const std::filesystem::path& root);
/// Per-class index split, the same rule as generate_dataset.
Split split_by_index(std::vector<Sample> samples, double train_fraction);

}  // namespace part
