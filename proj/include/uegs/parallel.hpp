#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace uegs {

/// Process-wide worker count used by all parallel loops. 0 means "use
/// hardware concurrency". Outputs are required to be identical for any
/// setting, so this only affects speed.
void set_thread_count(int n);
int thread_count();

/// Static block partition of [0, n) over the configured workers.
/// fn(begin, end) runs on each chunk; chunks are disjoint, so callers are
/// responsible for writing only to their own range (or into per-chunk
/// buffers merged afterwards in chunk order).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// Runs fn(i) for i in [0, n), one task per index, results independent.
void parallel_for_each(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace uegs
