#include "driverep/core/parallel.hpp"

namespace driverep {

namespace {
int g_threads = static_cast<int>(std::thread::hardware_concurrency());
}

int default_threads() { return g_threads > 0 ? g_threads : 1; }

void set_default_threads(int n) { g_threads = n > 0 ? n : 1; }

}  // namespace driverep
