#pragma once

#include <cstddef>
#include <functional>

namespace bmm {

/// Worker count for internal loops. Honors BMM_THREADS (a positive integer
/// cap); otherwise the hardware concurrency. Never affects results.
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Iterations are split into contiguous
/// chunks, one per worker; each iteration must write only its own slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace bmm
