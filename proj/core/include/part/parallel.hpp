#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace part {

/// Thread cap from PART_THREADS, falling back to the hardware concurrency.
std::size_t default_threads();

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; callers own any ordering of side effects.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// SplitMix64 finalizer; used to derive independent seeds from one master seed.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace part
