#pragma once

#include <cstddef>
#include <functional>

namespace esi {

// Worker count: ESI_THREADS when set to a positive integer, otherwise hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n) across up to worker_count() threads.
// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace esi
