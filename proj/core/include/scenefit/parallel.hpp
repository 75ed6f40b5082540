#pragma once

#include <cstddef>
#include <functional>

namespace scenefit {

/// Worker cap for internal fan-out; 0 means hardware concurrency. Results never
/// depend on this value: work items write disjoint slots and reductions run in
/// index order on the calling thread.
void set_num_threads(int threads);
int num_threads();

/// Calls fn(i) for i in [0, n), possibly concurrently. Exceptions from workers
/// are rethrown on the calling thread (the one from the lowest index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace scenefit
