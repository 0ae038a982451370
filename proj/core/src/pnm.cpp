#include "part/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <vector>

namespace part {

PnmError::PnmError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

namespace {

std::size_t channels_of(const Tensor& image) {
  if (image.rank() == 2) return 1;
  if (image.rank() == 3 && (image.extent(2) == 1 || image.extent(2) == 3)) return image.extent(2);
  throw DimensionError("netpbm images must be {H, W}, {H, W, 1} or {H, W, 3}, got " +
                       shape_string(image.shape()));
}

unsigned char quantize(double v) {
  const double level = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<unsigned char>(level);
}

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }

  void skip_space_and_comments() {
    while (!at_end()) {
      if (bytes_[pos_] == '#') {
        while (!at_end() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (at_end()) throw PnmError(std::string("unexpected end of header reading ") + what, pos_);
    if (!std::isdigit(bytes_[pos_])) throw PnmError(std::string("expected ") + what, pos_);
    std::size_t v = 0;
    while (!at_end() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) throw PnmError(std::string(what) + " is too large", pos_);
      ++pos_;
    }
    return v;
  }

  void single_space() {
    if (at_end() || !std::isspace(bytes_[pos_])) throw PnmError("expected whitespace after header", pos_);
    ++pos_;
  }

  unsigned char byte() { return bytes_[pos_++]; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_pnm(std::ostream& out, const Tensor& image) {
  const std::size_t c = channels_of(image);
  const std::size_t h = image.extent(0), w = image.extent(1);
  out << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << '\n' << 255 << '\n';
  std::vector<char> data(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) data[i] = static_cast<char>(quantize(image[i]));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("failed to write image data");
}

Tensor read_pnm(std::istream& in) {
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));
  if (r.remaining() < 2) throw PnmError("missing magic number", r.pos());
  const unsigned char p = r.byte(), kind = r.byte();
  if (p != 'P' || (kind != '5' && kind != '6')) throw PnmError("magic must be P5 or P6", 0);
  const std::size_t channels = kind == '5' ? 1 : 3;
  const std::size_t w = r.number("width");
  const std::size_t h = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (w == 0 || h == 0) throw PnmError("image extents must be positive", r.pos());
  if (maxval == 0 || maxval > 255) throw PnmError("maxval must be in [1, 255]", r.pos());
  r.single_space();
  const std::size_t need = w * h * channels;
  if (r.remaining() < need) {
    throw PnmError("truncated pixel data: need " + std::to_string(need) + " bytes, have " +
                       std::to_string(r.remaining()),
                   r.bytes().size());
  }
  Tensor image({h, w, channels});
  for (std::size_t i = 0; i < need; ++i) {
    const unsigned char b = r.byte();
    if (b > maxval) throw PnmError("sample exceeds maxval", r.pos() - 1);
    image[i] = static_cast<double>(b) / static_cast<double>(maxval);
  }
  return image;
}

namespace {

void save_checked(const std::filesystem::path& path, const Tensor& image, std::size_t expected) {
  if (channels_of(image) != expected) {
    throw DimensionError((expected == 1 ? "PGM needs one channel, got " : "PPM needs three channels, got ") +
                         shape_string(image.shape()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pnm(out, image);
}

Tensor load_checked(const std::filesystem::path& path, std::size_t expected) {
  Tensor t = load_pnm(path);
  if (expected != 0 && t.extent(2) != expected) {
    throw PnmError(path.string() + ": expected " + (expected == 1 ? "P5" : "P6"), 0);
  }
  return t;
}

}  // namespace

void save_pgm(const std::filesystem::path& path, const Tensor& image) { save_checked(path, image, 1); }
void save_ppm(const std::filesystem::path& path, const Tensor& image) { save_checked(path, image, 3); }

Tensor load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_pnm(in);
}

Tensor load_pgm(const std::filesystem::path& path) { return load_checked(path, 1); }
Tensor load_ppm(const std::filesystem::path& path) { return load_checked(path, 3); }

}  // namespace part
