#pragma once

#include <cstdint>
#include <functional>

namespace flattenet {

// Worker cap: min(hardware_concurrency, FLATTENET_THREADS if set). At least 1.
int max_threads();

// Splits [0, count) into contiguous chunks, one per worker. Each index is
// processed by exactly one worker, so writes to disjoint slices are safe and
// results do not depend on the thread count.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& body);

} // namespace flattenet
