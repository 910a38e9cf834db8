#include "specrf/common.hpp"
#include "specrf/par.hpp"

namespace specrf {

namespace {
bool g_strict = false;
par::Exec g_exec = par::Exec::Parallel;
}  // namespace

bool strict_mode() { return g_strict; }
void set_strict_mode(bool on) { g_strict = on; }

namespace par {

Exec exec_mode() { return g_exec; }
void set_exec_mode(Exec mode) { g_exec = mode; }

int thread_count() {
#ifdef _OPENMP
    return g_exec == Exec::Parallel ? omp_get_max_threads() : 1;
#else
    return 1;
#endif
}

}  // namespace par
}  // namespace specrf
