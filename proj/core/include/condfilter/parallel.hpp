#pragma once

#include <cstddef>
#include <functional>

namespace condfilter {

/// Number of workers to use for a request of `workers` (0 = hardware
/// concurrency, at least 1).
unsigned resolve_workers(unsigned workers);

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; if any call throws, the exception from the
/// smallest failing index is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace condfilter
