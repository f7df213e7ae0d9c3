#pragma once

#include <functional>

namespace owd {

/// Worker cap: min(hardware_concurrency, OWD_THREADS). OWD_THREADS=1
/// forces serial execution.
int thread_count();

/// Run fn(i) for i in [0, n). Work is split into contiguous chunks; since
/// every index writes only its own outputs, results do not depend on the
/// thread count. Callers that reduce must do so in index order afterwards.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace owd
