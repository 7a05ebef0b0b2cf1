#pragma once

#include <cstddef>
#include <functional>

namespace mgd {

// Worker count: MGD_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
// write results into per-index slots so output order never depends on
// scheduling. Exceptions from workers are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mgd
