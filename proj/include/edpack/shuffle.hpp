#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "edpack/error.hpp"
#include "edpack/splitmix.hpp"
#include "edpack/stream.hpp"

namespace edpack {

// Bounded-buffer shuffle. The buffer is filled to capacity, then each output
// draws index = next_u64 mod buffer_len, emits that slot and refills it from
// upstream. Once upstream is exhausted the emptied slot takes the last element
// and the buffer shrinks by one. A draw happens on every emission, including
// when only one element remains.
template <Source S>
class Shuffler {
 public:
  using value_type = typename S::value_type;

  Shuffler(S upstream, std::size_t buffer_size, std::uint64_t seed)
      : upstream_(std::move(upstream)), capacity_(buffer_size), rng_(seed) {
    if (buffer_size < 1) throw ConfigError("shuffle buffer_size must be >= 1");
    buffer_.reserve(capacity_);
  }

  std::optional<value_type> next() {
    if (!filled_) {
      while (buffer_.size() < capacity_) {
        auto item = upstream_.next();
        if (!item) {
          exhausted_ = true;
          break;
        }
        buffer_.push_back(std::move(*item));
      }
      filled_ = true;
    }
    if (buffer_.empty()) return std::nullopt;

    const std::size_t idx = static_cast<std::size_t>(rng_.next() % buffer_.size());
    value_type out = std::move(buffer_[idx]);
    std::optional<value_type> refill;
    if (!exhausted_) {
      refill = upstream_.next();
      if (!refill) exhausted_ = true;
    }
    if (refill) {
      buffer_[idx] = std::move(*refill);
    } else {
      if (idx + 1 != buffer_.size()) buffer_[idx] = std::move(buffer_.back());
      buffer_.pop_back();
    }
    return out;
  }

  S& upstream() noexcept { return upstream_; }
  const S& upstream() const noexcept { return upstream_; }

 private:
  S upstream_;
  std::size_t capacity_;
  SplitMix64 rng_;
  std::vector<value_type> buffer_;
  bool filled_ = false;
  bool exhausted_ = false;
};

template <class T>
std::vector<T> shuffle(std::vector<T> items, std::size_t buffer_size, std::uint64_t seed) {
  return collect(Shuffler<VectorSource<T>>(VectorSource<T>(std::move(items)), buffer_size, seed));
}

}  // namespace edpack
