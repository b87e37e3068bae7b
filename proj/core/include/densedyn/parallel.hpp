#pragma once

#include <cstddef>
#include <functional>

namespace densedyn {

/// Worker count from DENSEDYN_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();
/// Overrides the environment for this process; 0 restores auto.
void set_thread_count(std::size_t n);

/// Calls body(i) for i in [0, n). Indices are split into contiguous chunks;
/// callers must make body(i) write only state owned by index i so that the
/// result is independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace densedyn
