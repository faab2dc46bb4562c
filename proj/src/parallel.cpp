#include "afree/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace afree {

namespace {
std::atomic<int> g_budget{0};
}

void set_thread_budget(int n) { g_budget.store(n < 0 ? 0 : n); }

int thread_budget() {
  int b = g_budget.load();
  if (b == 0) {
    unsigned hc = std::thread::hardware_concurrency();
    b = hc == 0 ? 1 : static_cast<int>(hc);
  }
  return b;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  int workers = thread_budget();
  if (workers <= 1 || n < 2) {
    body(0, n);
    return;
  }
  std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::size_t chunk = (n + nw - 1) / nw;
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    std::size_t b = w * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  for (auto& t : pool) t.join();
}

} // namespace afree
