#pragma once

#include <cstdint>
#include <functional>

namespace brave {

// Global worker cap for parallel_for. Defaults to hardware concurrency.
int max_threads();
void set_max_threads(int n);

// Runs fn over [0, n) split into contiguous chunks, one chunk per worker.
// Each index is processed by exactly one worker and chunk-internal order is
// sequential, so results are identical for any worker count as long as fn
// writes only to locations derived from its own indices.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace brave
