#include "part/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace part {

namespace {

constexpr std::array<char, 8> magic{'P', 'A', 'R', 'T', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::uint32_t checked_u32(std::size_t n, const char* what) {
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw CheckpointError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(n);
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(magic.data(), magic.size());
  put_le<std::uint32_t>(out, checkpoint_version);
  put_le<std::uint32_t>(out, checked_u32(tensors.size(), "tensor count"));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, checked_u32(name.size(), "tensor name"));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, checked_u32(t.rank(), "rank"));
    for (auto e : t.shape()) put_le<std::uint32_t>(out, checked_u32(e, "extent"));
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("failed to write checkpoint");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  std::array<char, 8> head{};
  in.read(head.data(), head.size());
  if (!in || head != magic) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != checkpoint_version) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in, "tensor count");

  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CheckpointError("truncated checkpoint while reading tensor name");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank == 0 || rank > 8) throw CheckpointError("implausible rank for tensor '" + name + "'");
    Shape shape(rank);
    for (auto& e : shape) {
      e = get_le<std::uint32_t>(in, "extent");
      if (e == 0) throw CheckpointError("zero extent in tensor '" + name + "'");
    }
    std::vector<double> data(shape_volume(shape));
    for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "tensor data"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace part
