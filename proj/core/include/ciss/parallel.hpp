#pragma once

#include <cstdint>
#include <functional>

namespace ciss {

// Process-wide worker count for batch-level parallel loops. Numerics stay
// bit-identical for any thread count: loop bodies write disjoint outputs and
// cross-item reductions are summed in index order by the caller.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). With num_threads() == 1 this is a plain loop.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

} // namespace ciss
