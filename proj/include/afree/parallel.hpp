#ifndef AFREE_PARALLEL_HPP
#define AFREE_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace afree {

// Global worker budget for coarse-grained loops (restarts, sample sweeps,
// convolution tiles). 0 means "use hardware concurrency".
void set_thread_budget(int n);
int thread_budget();

// Splits [0,n) into contiguous chunks, one per worker. Runs inline when the
// budget is 1 or the range is small.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

} // namespace afree

#endif
