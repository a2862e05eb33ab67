#include "dice/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dice {

namespace {
std::atomic<int> g_threads{1};
thread_local bool t_inside = false;
}  // namespace

void set_num_threads(int n) {
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  g_threads = n;
}

int num_threads() { return g_threads; }

void parallel_for(size_t n, const std::function<void(size_t)>& body) {
  int nt = std::min<int>(g_threads, static_cast<int>(n));
  if (nt <= 1 || t_inside) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto work = [&] {
    t_inside = true;
    for (;;) {
      size_t i = next++;
      if (i >= n) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!err) err = std::current_exception();
      }
    }
    t_inside = false;
  };
  std::vector<std::thread> pool;
  for (int k = 1; k < nt; ++k) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace dice
