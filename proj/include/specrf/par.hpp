#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace specrf::par {

enum class Exec { Serial, Parallel };

// Process-wide execution mode. Every parallel kernel in the library is written
// so Serial and Parallel produce bit-identical results (fixed work blocks,
// per-block buffers, ordered reductions); tests assert that equivalence.
Exec exec_mode();
void set_exec_mode(Exec mode);
int thread_count();

// Runs fn(i) for i in [0, n). Chunking is static so the assignment of
// iterations to threads never affects results (no shared mutable state is
// allowed inside fn across iterations).
template <class Fn>
void parallel_for(int64_t n, Fn&& fn) {
    if (n <= 0) return;
#ifdef _OPENMP
    if (exec_mode() == Exec::Parallel && n > 1) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#endif
    for (int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace specrf::par
