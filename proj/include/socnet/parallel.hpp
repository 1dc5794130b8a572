// socnet/parallel.hpp - static chunked parallel loops
#pragma once

#include <cstddef>
#include <functional>

namespace socnet {

// Resolves a requested worker count: 0 means hardware concurrency, and the
// SOCNET_THREADS environment variable overrides the hardware default.
std::size_t resolve_threads(std::size_t requested);

// Calls body(begin, end) over disjoint contiguous chunks of [0, n). Results
// must not depend on chunking; callers write into per-index slots.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace socnet
