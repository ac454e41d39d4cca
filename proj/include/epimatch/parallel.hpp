#pragma once

#include <functional>

namespace epimatch {

/// Worker cap for per-pair loops; 0 means hardware concurrency. Defaults to 1.
void set_num_threads(int threads);
int num_threads();

/// Runs body(i) for i in [0, n) across up to num_threads() workers. Bodies
/// must write only to per-index slots; the exception from the lowest index is
/// rethrown after all workers finish.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace epimatch
