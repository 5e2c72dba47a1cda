#pragma once

#include <cstddef>
#include <functional>

namespace vortexflow {

/// Worker count: VORTEXFLOW_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for i in [0, n), split into contiguous blocks over at most
/// worker_count() threads. Each index is processed exactly once, so results
/// written per index do not depend on the partitioning.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vortexflow
