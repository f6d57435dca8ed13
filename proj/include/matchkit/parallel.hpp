#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace matchkit {

// Thread count resolution: explicit request > MATCHKIT_THREADS > hardware.
int resolve_threads(int requested = 0);

// Runs fn(i) for i in [0, count) over `threads` workers. Callers write results
// into preallocated per-index slots, so outputs are independent of the thread
// count. Exceptions are rethrown on the calling thread.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace matchkit
