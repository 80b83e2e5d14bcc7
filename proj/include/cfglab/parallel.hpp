#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cfglab {

// Runs fn(i) for i in [0, n) across up to `workers` threads, strided so every
// worker count covers the same index set. Each index must touch only its own
// pre-sized output slot; under that contract results are byte-identical to the
// serial loop whatever the worker count. The first exception wins and is
// rethrown after all threads join.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t w =
      workers <= 1 ? 1 : std::min(static_cast<std::size_t>(workers), n);
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t wi = 0; wi < w; ++wi) {
    pool.emplace_back([&, wi] {
      try {
        for (std::size_t i = wi; i < n; i += w) fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace cfglab
