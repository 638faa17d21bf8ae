#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace eigenloc {

// Number of worker threads used by intra-stage loops. 0 selects the machine's
// hardware concurrency. Never affects numeric output.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs fn(begin, end) over contiguous sub-ranges of [0, n), possibly in parallel.
// fn must only write to state owned by its range.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Fixed block size used by ordered reductions. Partial results are computed per
// block and combined in block order, so sums do not depend on the thread count.
inline constexpr std::size_t kReduceBlock = 1024;

// Calls fn(block_index, begin, end) for every block of kReduceBlock items.
void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t block_count(std::size_t n) {
  return (n + kReduceBlock - 1) / kReduceBlock;
}

}  // namespace eigenloc
