#pragma once

#include <cstddef>
#include <functional>

namespace symdiff {

// Worker count: SYMDIFF_THREADS if set to a positive integer, otherwise hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, count) on up to `workers` threads using contiguous static chunks.
// Callers write results into per-index slots and reduce afterwards in index order, which keeps
// results independent of the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, std::size_t workers = worker_count());

}  // namespace symdiff
