#ifndef MMDFORGE_PARALLEL_HPP
#define MMDFORGE_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace mmdforge {

// Number of worker threads honored by parallel_for: the minimum of the
// hardware concurrency and the MMD_FORGE_THREADS environment variable
// (unset or 0 means "hardware concurrency").
int worker_threads();

// Runs fn(i) for i in [0, count). Tasks must be independent; results keyed
// by index stay deterministic regardless of the thread count. Falls back to
// a plain loop when a single worker is available or count is small.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace mmdforge

#endif  // MMDFORGE_PARALLEL_HPP
