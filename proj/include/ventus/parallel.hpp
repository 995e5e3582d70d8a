#pragma once

#include <cstddef>
#include <functional>

namespace ventus {

// Number of workers used by parallel_for when the caller passes jobs == 0.
std::size_t default_jobs();

// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index is
// visited exactly once; callers write results into pre-sized slots so the
// output order never depends on scheduling. jobs <= 1 runs inline.
// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace ventus
