#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "part/tensor.hpp"

namespace part {

/// Malformed or truncated netpbm data; offset is the byte where parsing stopped.
class PnmError : public std::runtime_error {
 public:
  PnmError(const std::string& what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Writes a binary P5 (one channel) or P6 (three channels) image with maxval
/// 255. Accepts {H, W}, {H, W, 1} or {H, W, 3}; values are clamped to [0, 1]
/// and rounded to the nearest level.
void write_pnm(std::ostream& out, const Tensor& image);
/// Parses P5 or P6 into {H, W, 1} or {H, W, 3} with values level / maxval.
Tensor read_pnm(std::istream& in);

void save_pgm(const std::filesystem::path& path, const Tensor& image);
void save_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor load_pgm(const std::filesystem::path& path);
Tensor load_ppm(const std::filesystem::path& path);
/// Either format, decided by the magic number.
Tensor load_pnm(const std::filesystem::path& path);

}  // namespace part
