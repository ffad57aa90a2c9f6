#pragma once

#include <cstddef>
#include <functional>

namespace mia {

/// Calls fn(i) for i in [0, count) on up to `threads` workers. Callers write
/// results into per-index slots, so output never depends on scheduling. The
/// first exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace mia
