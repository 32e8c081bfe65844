#pragma once

#include <concepts>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace edpack {

// A pull-based single-consumer stream: next() returns std::nullopt at end.
template <class S>
concept Source = requires(S& s) {
  typename S::value_type;
  { s.next() } -> std::same_as<std::optional<typename S::value_type>>;
};

template <class S, class T>
concept SourceOf = Source<S> && std::same_as<typename S::value_type, T>;

template <class T>
class VectorSource {
 public:
  using value_type = T;

  explicit VectorSource(std::vector<T> items) : items_(std::move(items)) {}

  std::optional<T> next() {
    if (pos_ >= items_.size()) return std::nullopt;
    return std::move(items_[pos_++]);
  }

 private:
  std::vector<T> items_;
  std::size_t pos_ = 0;
};

template <Source S>
std::vector<typename S::value_type> collect(S& src) {
  std::vector<typename S::value_type> out;
  while (auto item = src.next()) out.push_back(std::move(*item));
  return out;
}

template <Source S>
std::vector<typename S::value_type> collect(S&& src) {
  return collect(src);
}

}  // namespace edpack
