#ifndef CHARFUSE_PARALLEL_HPP
#define CHARFUSE_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace charfuse {

// Runs fn(0..count-1) on up to `threads` workers. Each index must touch only
// its own output slot; results are then bit-identical to the serial run.
// threads <= 1 executes inline.
void parallel_for(int threads, size_t count, const std::function<void(size_t)>& fn);

}  // namespace charfuse

#endif  // CHARFUSE_PARALLEL_HPP
