#pragma once

#include <functional>

namespace shopgraph {

/// Runs task(i) for every i in [0, count) on up to `threads` workers. Tasks
/// must write to disjoint outputs. The first exception thrown is rethrown
/// after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& task);

}  // namespace shopgraph
