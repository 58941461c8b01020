#pragma once

#include "idml/core.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace idml {

template <typename Body>
void parallel_for(Index n, Body&& body) {
  const auto workers = static_cast<Index>(std::min<unsigned>(thread_budget(), static_cast<unsigned>(std::max<Index>(n, 1))));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Index i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace idml
