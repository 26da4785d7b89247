#pragma once

#include <cstddef>
#include <functional>

namespace gsdrive {

/// Worker count: GSPROBE_WORKERS if set and positive, otherwise the number of
/// hardware threads (at least 1).
int default_worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Indices are
/// assigned round-robin; body must only write to per-index state. The first
/// exception thrown by any worker is rethrown after all workers join.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace gsdrive
