#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "edpack/stream.hpp"

namespace edpack {

// Applies fn to every element with up to `workers` threads. Results come back
// indexed by input position, so output order never depends on scheduling.
// If several elements throw, the exception of the lowest index is rethrown.
template <class In, class Fn>
auto parallel_map(const std::vector<In>& inputs, Fn&& fn, unsigned workers)
    -> std::vector<std::invoke_result_t<Fn&, const In&>> {
  using Out = std::invoke_result_t<Fn&, const In&>;
  const std::size_t n = inputs.size();
  std::vector<std::optional<Out>> slots(n);
  std::vector<std::exception_ptr> errors(n);

  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), n));
  if (threads <= 1) {
    std::vector<Out> out;
    out.reserve(n);
    for (const auto& in : inputs) out.push_back(fn(in));
    return out;
  }

  std::atomic<std::size_t> cursor{0};
  auto work = [&] {
    for (std::size_t i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) {
      try {
        slots[i].emplace(fn(inputs[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();

  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<Out> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// Streams `src` through fn in batches, handing (input, result) pairs to sink in input order.
template <Source S, class Fn, class Sink>
void ordered_parallel_for_each(S& src, Fn&& fn, unsigned workers, std::size_t batch_size, Sink&& sink) {
  using In = typename S::value_type;
  batch_size = std::max<std::size_t>(1, batch_size);
  std::vector<In> batch;
  batch.reserve(batch_size);
  auto flush = [&] {
    auto results = parallel_map(batch, fn, workers);
    for (std::size_t i = 0; i < batch.size(); ++i) sink(std::move(batch[i]), std::move(results[i]));
    batch.clear();
  };
  while (auto item = src.next()) {
    batch.push_back(std::move(*item));
    if (batch.size() == batch_size) flush();
  }
  if (!batch.empty()) flush();
}

}  // namespace edpack
