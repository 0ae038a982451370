#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "part/tensor.hpp"

namespace part {

inline constexpr std::uint32_t checkpoint_version = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout (little-endian): "PARTCKPT", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rank, u32 extents[rank], f64 data[].
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace part
