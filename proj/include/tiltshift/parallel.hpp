#pragma once

#include <functional>

namespace tiltshift {

/// Caps the worker count used by the engine. 0 restores the hardware default.
void set_thread_count(int n);
int thread_count();

/// Runs body(i) for i in [begin, end) split into contiguous chunks, one per
/// worker. Each index is handled by exactly one worker, so per-index results
/// do not depend on the thread count.
void parallel_for(int begin, int end, const std::function<void(int)>& body);

}  // namespace tiltshift
