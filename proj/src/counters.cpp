#include "evfuse/counters.hpp"

namespace evfuse::counters {

namespace {
thread_local Counters g_counters;
}

Counters& get() { return g_counters; }

void reset() { g_counters = Counters{}; }

}  // namespace evfuse::counters
