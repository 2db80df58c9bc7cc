#include "nr/parallel.hpp"

#include <algorithm>

namespace nr {

namespace {
int g_workers = 1;
thread_local int g_depth = 0;
}  // namespace

int worker_count() { return g_depth > 0 ? 1 : g_workers; }
void set_worker_count(int n) { g_workers = std::max(1, n); }

namespace detail {
ParallelRegion::ParallelRegion() { ++g_depth; }
ParallelRegion::~ParallelRegion() { --g_depth; }
}  // namespace detail

}  // namespace nr
