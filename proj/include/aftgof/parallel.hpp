#pragma once

#include <cstdint>
#include <functional>
#include <random>

namespace aftgof {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Generator keyed by (seed, domain, index). Results depend on nothing else.
std::mt19937_64 keyed_stream(std::uint64_t seed, std::uint64_t domain, std::uint64_t index);

/// Worker count used by parallel_for. Defaults to AFTGOF_THREADS when set,
/// otherwise the hardware concurrency.
int worker_count();
void set_worker_count(int threads);

/// Runs body(i) for i in [0, count) on worker_count() threads with static
/// chunking. Calls made from inside a worker run serially. The first
/// exception thrown by any body is rethrown.
void parallel_for(int count, const std::function<void(int)>& body);

}  // namespace aftgof
