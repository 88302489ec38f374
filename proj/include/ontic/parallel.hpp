#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

namespace ontic {

/// Process-wide cap on worker threads (the CLI's --workers flag sets it).
inline std::atomic<unsigned>& worker_cap() {
  static std::atomic<unsigned> cap{1};
  return cap;
}

/// Runs fn(i) for i in [0, count) on up to worker_cap() threads. The first
/// exception thrown by any task is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, worker_cap().load()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
  }
  if (error) std::rethrow_exception(error);
}

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream). Partition k of any sampled
/// quantity always uses stream k, so results do not depend on how many
/// workers ran the partitions.
inline Rng substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x6f6e7469u};
  return Rng(seq);
}

/// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal by Box-Muller (one value per call, portable across stdlibs).
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Samples per partition for every seeded Monte Carlo routine.
inline constexpr std::size_t kPartitionSize = std::size_t{1} << 14;

inline std::size_t partition_count(std::size_t n) { return (n + kPartitionSize - 1) / kPartitionSize; }

/// Fills out[0, n) partition by partition. fn(rng, begin, end) writes
/// out[begin, end) using only the partition's own generator.
template <typename Fn>
void partitioned(std::size_t n, std::uint64_t seed, std::uint64_t stream_base, Fn&& fn) {
  parallel_for(partition_count(n), [&](std::size_t part) {
    Rng rng = substream(seed, stream_base + part);
    const std::size_t begin = part * kPartitionSize;
    fn(rng, begin, std::min(n, begin + kPartitionSize));
  });
}

}  // namespace ontic
