// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace noisepref {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work items
/// must write only to their own slot; callers reduce in index order so
/// results do not depend on the thread count. If items throw, the exception
/// of the lowest index is rethrown.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
  if (count == 0) return;
  const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(count)));
  std::vector<std::exception_ptr> errors(count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace noisepref
