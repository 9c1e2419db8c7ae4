#include "dichotomy/parallel.hpp"

#include <atomic>

namespace dichotomy {
namespace {
std::atomic<std::size_t> g_threads{1};
}

std::size_t default_threads() { return g_threads.load(); }

void set_default_threads(std::size_t n) {
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  g_threads.store(n);
}

}  // namespace dichotomy
