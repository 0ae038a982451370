#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "part/dataset.hpp"
#include "part/pnm.hpp"
#include "test_support.hpp"

using namespace part;
using part::test::max_abs_diff;
using part::test::random_tensor;

namespace {

// Hand-drawn 5x5 glyphs, independent of glyph_mask.
const std::map<Glyph, std::vector<std::string>> drawn = {
    {Glyph::square, {"#####", "#####", "#####", "#####", "#####"}},
    {Glyph::ring, {"#####", "#...#", "#...#", "#...#", "#####"}},
    {Glyph::plus, {"..#..", "..#..", "#####", "..#..", "..#.."}},
    {Glyph::cross, {"#...#", ".#.#.", "..#..", ".#.#.", "#...#"}},
};

bool inside(const std::array<std::size_t, 4>& box, std::size_t y, std::size_t x) {
  return y >= box[0] && y < box[2] && x >= box[1] && x < box[3];
}

// Body rectangle inset by one pixel, with each glyph drawn over it.
Tensor oracle_template(const SynthSpec& spec, const MotifLayout& l) {
  const std::size_t S = spec.size, c = spec.cell();
  Tensor img({S, S, 1});
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x)
      if (y >= 1 && x >= 1 && y <= S - 2 && x <= S - 2) img[y * S + x] = 0.5;
  auto draw = [&](Glyph g, std::size_t top, std::size_t left) {
    const auto& rows = drawn.at(g);
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 5; ++x) img[(top + y) * S + left + x] = rows[y][x] == '#' ? 1.0 : 0.0;
  };
  draw(l.first, l.first_y * c + l.jitter[0], l.first_x * c + l.jitter[1]);
  draw(l.second, l.second_y * c + l.jitter[2], l.second_x * c + l.jitter[3]);
  return img;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("part_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("default spec is valid and matches the documented shape") {
  SynthSpec spec;
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.classes == 8);
  CHECK(spec.per_class == 40);
  CHECK(spec.size == 48);
  CHECK(spec.motifs == 2);
  CHECK(spec.motif_size == 5);
  CHECK(spec.noise == doctest::Approx(0.05));
}

TEST_CASE("invalid specs are rejected") {
  auto bad = [](auto edit) {
    SynthSpec s;
    edit(s);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  };
  bad([](SynthSpec& s) { s.classes = 1; });
  bad([](SynthSpec& s) { s.classes = 9; });
  bad([](SynthSpec& s) { s.motifs = 3; });
  bad([](SynthSpec& s) { s.per_class = 0; });
  bad([](SynthSpec& s) { s.motif_size = 4; });
  bad([](SynthSpec& s) { s.motif_size = 9; });
  bad([](SynthSpec& s) { s.jitter = 4; });
  bad([](SynthSpec& s) { s.size = 24; });
  bad([](SynthSpec& s) { s.spacing_max = 4; });
  bad([](SynthSpec& s) { s.spacing_min = 0; });
  bad([](SynthSpec& s) { s.spacing_min = 3, s.spacing_max = 2; });
  bad([](SynthSpec& s) { s.noise = -0.1; });
  bad([](SynthSpec& s) { s.train_fraction = 1.0; });
  CHECK_THROWS_AS(generate_dataset([] { SynthSpec s; s.classes = 1; return s; }()), std::invalid_argument);
}

TEST_CASE("glyph masks match hand-drawn glyphs") {
  for (const auto& [g, rows] : drawn) {
    const auto mask = glyph_mask(g, 5);
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 5; ++x) CHECK(mask[y * 5 + x] == (rows[y][x] == '#' ? 1.0 : 0.0));
  }
}

TEST_CASE("every class is a distinct ordered pair of glyphs each used by several classes") {
  std::set<std::pair<Glyph, Glyph>> seen;
  std::map<Glyph, int> uses;
  for (std::size_t k = 0; k < 8; ++k) {
    const auto p = class_glyphs(k);
    CHECK(p.first != p.second);
    CHECK(seen.insert(p).second);
    ++uses[p.first];
    ++uses[p.second];
  }
  for (const auto& [g, n] : uses) CHECK(n >= 2);
  CHECK_THROWS_AS(class_glyphs(8), std::out_of_range);
}

TEST_CASE("layouts keep both glyphs on inner cells with the configured geometry") {
  SynthSpec spec;
  std::mt19937_64 rng(5);
  std::set<long> spacings, rises;
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = static_cast<std::size_t>(t) % spec.classes;
    const auto l = sample_layout(spec, k, rng);
    CHECK(l.first == class_glyphs(k).first);
    CHECK(l.second == class_glyphs(k).second);
    for (auto v : {l.first_x, l.first_y, l.second_x, l.second_y}) {
      CHECK(v >= 1);
      CHECK(v <= spec.cells() - 2);
    }
    const long s = static_cast<long>(l.second_x) - static_cast<long>(l.first_x);
    const long r = static_cast<long>(l.second_y) - static_cast<long>(l.first_y);
    spacings.insert(s);
    rises.insert(r);
    for (auto j : l.jitter) CHECK(j <= spec.jitter);
    for (const auto& box : motif_boxes(spec, l)) {
      CHECK(box[0] >= 1);
      CHECK(box[1] >= 1);
      CHECK(box[2] <= spec.size - 1);
      CHECK(box[3] <= spec.size - 1);
    }
  }
  CHECK(spacings == std::set<long>{2, 3});
  CHECK(rises == std::set<long>{-1, 0, 1});
  CHECK_THROWS_AS(sample_layout(spec, 8, rng), std::out_of_range);
}

TEST_CASE("noiseless template matches the construction oracle") {
  SynthSpec spec;
  std::mt19937_64 rng(11);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    const auto l = sample_layout(spec, k, rng);
    CHECK(max_abs_diff(render_template(spec, l), oracle_template(spec, l)) == 0.0);
  }
}

TEST_CASE("two classes' noiseless templates differ only inside motif boxes") {
  SynthSpec spec;
  std::mt19937_64 rng(3);
  for (std::size_t a = 0; a < spec.classes; ++a) {
    for (std::size_t b = a + 1; b < spec.classes; ++b) {
      const auto la = sample_layout(spec, a, rng), lb = sample_layout(spec, b, rng);
      const Tensor ta = render_template(spec, la), tb = render_template(spec, lb);
      const auto ba = motif_boxes(spec, la), bb = motif_boxes(spec, lb);
      double outside = 0.0, total = 0.0;
      for (std::size_t y = 0; y < spec.size; ++y) {
        for (std::size_t x = 0; x < spec.size; ++x) {
          const double d = std::abs(ta[y * spec.size + x] - tb[y * spec.size + x]);
          total += d;
          if (!inside(ba[0], y, x) && !inside(ba[1], y, x) && !inside(bb[0], y, x) && !inside(bb[1], y, x))
            outside += d;
        }
      }
      CHECK(outside == 0.0);
      CHECK(total > 0.0);
    }
  }

  // Same placement, different glyph pair: any difference lies in the two boxes.
  const auto l0 = sample_layout(spec, 0, rng);
  auto l2 = l0;
  std::tie(l2.first, l2.second) = class_glyphs(2);
  const Tensor t0 = render_template(spec, l0), t2 = render_template(spec, l2);
  const auto boxes = motif_boxes(spec, l0);
  for (std::size_t y = 0; y < spec.size; ++y)
    for (std::size_t x = 0; x < spec.size; ++x)
      if (!inside(boxes[0], y, x) && !inside(boxes[1], y, x)) CHECK(t0[y * spec.size + x] == t2[y * spec.size + x]);
}

TEST_CASE("generate_dataset is deterministic in the seed") {
  SynthSpec spec;
  spec.per_class = 10;
  const Split a = generate_dataset(spec), b = generate_dataset(spec);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].image == b.train[i].image);
    CHECK(a.train[i].label == b.train[i].label);
  }
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].image == b.test[i].image);
  spec.seed = 1;
  const Split c = generate_dataset(spec);
  CHECK_FALSE(c.train[0].image == a.train[0].image);
}

TEST_CASE("labels cover every class with the 80/20 split by index") {
  SynthSpec spec;
  const Split s = generate_dataset(spec);
  CHECK(s.train.size() == 8 * 32);
  CHECK(s.test.size() == 8 * 8);
  std::map<int, int> train_counts, test_counts;
  for (const auto& x : s.train) ++train_counts[x.label];
  for (const auto& x : s.test) ++test_counts[x.label];
  for (int k = 0; k < 8; ++k) {
    CHECK(train_counts[k] == 32);
    CHECK(test_counts[k] == 8);
  }
  CHECK(train_counts.size() == 8);
  for (const auto* part : {&s.train, &s.test}) {
    for (const auto& x : *part) {
      CHECK(x.image.shape() == Shape{48, 48, 1});
      for (double v : x.image.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("noise is additive around the template") {
  SynthSpec spec;
  spec.per_class = 1;
  spec.train_fraction = 0.5;
  spec.noise = 0.0;
  const Split clean = generate_dataset(spec);
  // With zero noise every image is exactly a template: values from {0, 0.5, 1}.
  for (const auto& x : clean.test)
    for (double v : x.image.values()) CHECK((v == 0.0 || v == 0.5 || v == 1.0));

  spec.noise = 0.05;
  spec.per_class = 20;
  const Split noisy = generate_dataset(spec);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& x : noisy.train) {
    for (std::size_t y = 2; y < 6; ++y)
      for (std::size_t c = 2; c < 46; ++c) {
        const double d = x.image[y * 48 + c] - 0.5;
        sum += d;
        sq += d * d;
        ++n;
      }
  }
  // Rows 2..5 lie in cell row 0, which never holds a glyph.
  CHECK(std::abs(sum / static_cast<double>(n)) < 0.005);
  CHECK(std::sqrt(sq / static_cast<double>(n)) == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("group sampler fills batches with distinct classes") {
  std::vector<int> labels;
  for (int k = 0; k < 8; ++k)
    for (int i = 0; i < 32; ++i) labels.push_back(k);
  std::mt19937_64 rng(1);
  const auto batches = group_sampler(labels, 16, 4, rng);
  CHECK(batches.size() == 16);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    REQUIRE(b.size() == 16);
    std::map<int, int> counts;
    for (auto i : b) {
      ++counts[labels[i]];
      CHECK(seen.insert(i).second);
    }
    CHECK(counts.size() == 4);
    for (const auto& [k, n] : counts) CHECK(n == 4);
  }
}

TEST_CASE("group sampler with per_class equal to batch gives single-class batches") {
  std::vector<int> labels;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 10; ++i) labels.push_back(k);
  std::mt19937_64 rng(2);
  const auto batches = group_sampler(labels, 4, 4, rng);
  CHECK(batches.size() == 6);
  for (const auto& b : batches) {
    std::set<int> ks;
    for (auto i : b) ks.insert(labels[i]);
    CHECK(ks.size() == 1);
  }
}

TEST_CASE("group sampler drops classes that run out") {
  // Class 0 has 12 samples, the others 4: after one batch per class pairing,
  // class 0 cannot find partners and its remaining groups are dropped.
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(0);
  for (int k = 1; k < 3; ++k)
    for (int i = 0; i < 4; ++i) labels.push_back(k);
  std::mt19937_64 rng(4);
  const auto batches = group_sampler(labels, 8, 4, rng);
  CHECK(batches.size() == 2);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    std::set<int> ks;
    for (auto i : b) {
      ks.insert(labels[i]);
      CHECK(seen.insert(i).second);
    }
    CHECK(ks.size() == 2);
    CHECK(ks.count(0) == 1);
  }
}

TEST_CASE("group sampler is deterministic in the rng") {
  std::vector<int> labels;
  for (int k = 0; k < 5; ++k)
    for (int i = 0; i < 9; ++i) labels.push_back(k);
  std::mt19937_64 a(9), b(9), c(10);
  const auto x = group_sampler(labels, 8, 4, a);
  CHECK(x == group_sampler(labels, 8, 4, b));
  CHECK_FALSE(x == group_sampler(labels, 8, 4, c));
}

TEST_CASE("group sampler rejects violated preconditions") {
  std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1};
  std::mt19937_64 rng(0);
  CHECK_THROWS_AS(group_sampler(labels, 6, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(group_sampler(labels, 0, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(group_sampler(labels, 4, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(group_sampler(labels, 12, 4, rng), std::invalid_argument);
  std::vector<int> short_class{0, 0, 0, 0, 1, 1, 1};
  CHECK_THROWS_AS(group_sampler(short_class, 8, 4, rng), std::invalid_argument);
}

TEST_CASE("PGM header for a 4x2 map") {
  Tensor img({2, 4}, 0.0);
  std::ostringstream os;
  write_pnm(os, img);
  const std::string bytes = os.str();
  CHECK(bytes.substr(0, 11) == "P5\n4 2\n255\n");
  CHECK(bytes.size() == 11 + 8);
}

TEST_CASE("PGM and PPM roundtrip within quantization") {
  std::mt19937_64 rng(6);
  const auto dir = scratch_dir("pnm");
  const Tensor gray = random_tensor({7, 5, 1}, rng, 0.0, 1.0);
  save_pgm(dir / "g.pgm", gray);
  const Tensor g2 = load_pgm(dir / "g.pgm");
  CHECK(g2.shape() == gray.shape());
  CHECK(max_abs_diff(gray, g2) <= 0.5 / 255.0 + 1e-12);

  const Tensor rgb = random_tensor({3, 6, 3}, rng, 0.0, 1.0);
  save_ppm(dir / "c.ppm", rgb);
  const Tensor c2 = load_ppm(dir / "c.ppm");
  CHECK(c2.shape() == rgb.shape());
  CHECK(max_abs_diff(rgb, c2) <= 0.5 / 255.0 + 1e-12);
  std::ifstream f(dir / "c.ppm", std::ios::binary);
  std::string magic(2, ' ');
  f.read(magic.data(), 2);
  CHECK(magic == "P6");

  // Quantized values survive a second cycle exactly.
  save_pgm(dir / "g3.pgm", g2);
  CHECK(load_pgm(dir / "g3.pgm") == g2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed netpbm data reports the byte offset") {
  auto parse = [](const std::string& bytes) {
    std::istringstream in(bytes);
    return read_pnm(in);
  };
  try {
    parse(std::string("P5\n4 2\n255\n") + std::string(5, '\0'));
    FAIL("truncated data accepted");
  } catch (const PnmError& e) {
    CHECK(e.offset() == 16);
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  try {
    parse("P5\n4 x\n255\n");
    FAIL("bad header accepted");
  } catch (const PnmError& e) {
    CHECK(e.offset() == 5);
  }
  CHECK_THROWS_AS(parse("P2\n1 1\n255\n0"), PnmError);
  CHECK_THROWS_AS(parse("P5\n4 2"), PnmError);
  CHECK_THROWS_AS(parse(""), PnmError);
}

TEST_CASE("dataset directory roundtrip") {
  SynthSpec spec;
  spec.per_class = 5;
  spec.classes = 3;
  const Split s = generate_dataset(spec);
  std::vector<Sample> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  const auto dir = scratch_dir("dataset");
  save_dataset(dir, all);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(loaded[i].label == all[i].label);
    CHECK(max_abs_diff(loaded[i].image, all[i].image) <= 0.5 / 255.0 + 1e-12);
  }
  const Split again = split_by_index(loaded, 0.8);
  CHECK(again.train.size() == 3 * 4);
  CHECK(again.test.size() == 3 * 1);

  std::ofstream(dir / "manifest.csv") << "path,label\n0/0.pgm,abc\n";
  CHECK_THROWS_AS(load_dataset(dir), std::runtime_error);
  std::ofstream(dir / "manifest.csv") << "file,label\n";
  CHECK_THROWS_AS(load_dataset(dir), std::runtime_error);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), std::runtime_error);
}

TEST_CASE("random crop translates and hflip mirrors") {
  std::mt19937_64 rng(8);
  const Tensor img = random_tensor({6, 7, 2}, rng, 0.0, 1.0);
  CHECK(random_crop(img, 0, rng) == img);
  for (int t = 0; t < 20; ++t) {
    const Tensor c = random_crop(img, 2, rng);
    // Find the shift that explains the crop.
    bool explained = false;
    for (long dy = -2; dy <= 2 && !explained; ++dy) {
      for (long dx = -2; dx <= 2 && !explained; ++dx) {
        bool ok = true;
        for (long y = 0; y < 6 && ok; ++y)
          for (long x = 0; x < 7 && ok; ++x)
            for (std::size_t ch = 0; ch < 2; ++ch) {
              const long sy = y + dy, sx = x + dx;
              const double want = (sy < 0 || sy >= 6 || sx < 0 || sx >= 7)
                                      ? 0.0
                                      : img[static_cast<std::size_t>(sy * 7 + sx) * 2 + ch];
              if (c[static_cast<std::size_t>(y * 7 + x) * 2 + ch] != want) ok = false;
            }
        explained = ok;
      }
    }
    CHECK(explained);
  }
  const Tensor f = hflip(img);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 7; ++x)
      for (std::size_t ch = 0; ch < 2; ++ch) CHECK(f[(y * 7 + x) * 2 + ch] == img[(y * 7 + 6 - x) * 2 + ch]);
  CHECK(hflip(f) == img);
  CHECK_THROWS_AS(hflip(Tensor({3, 3})), DimensionError);
}
