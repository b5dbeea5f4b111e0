#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace arrestmap {

// Runs fn(i) for i in [0, n) on up to `threads` workers that pull indices from
// a shared counter. Calls made from inside a worker run serially, so nesting is
// safe. The first exception thrown by any task is rethrown after all workers
// have joined. Results must be written to per-index slots by the caller.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

// Process-wide default worker count used when a caller passes threads == 0.
void set_default_threads(unsigned threads);
unsigned default_threads();

// SplitMix64 finalizer; used to derive independent per-task seeds from one
// master seed so parallel schedules never change random streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace arrestmap
