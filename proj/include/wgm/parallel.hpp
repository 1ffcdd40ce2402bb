#pragma once

#include <cstddef>
#include <functional>

namespace wgm {

/// Worker count: WGM_MAPPER_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
unsigned worker_count();

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results written by index are independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace wgm
