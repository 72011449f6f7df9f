#pragma once

#include <functional>

#include "qti/types.hpp"

namespace qti {

// Process-wide worker count used by parallel_for. Defaults to 1.
void set_thread_count(int n);
int thread_count();

// Runs body(i) for i in [0, n). Each index is executed exactly once; callers
// write results into per-index slots so output never depends on scheduling.
void parallel_for(Index n, const std::function<void(Index)> &body);

} // namespace qti
