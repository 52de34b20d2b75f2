#pragma once

#include <functional>

namespace gavatar {

/// Worker count for parallel loops. Defaults to GAVATAR_THREADS or the hardware concurrency.
int worker_count();
void set_worker_count(int workers);

/// Runs fn(chunk_begin, chunk_end) over [begin, end) split into contiguous chunks.
/// Runs inline when there is a single worker or a single chunk.
void parallel_for(int begin, int end, const std::function<void(int, int)>& fn, int min_chunk = 64);

} // namespace gavatar
