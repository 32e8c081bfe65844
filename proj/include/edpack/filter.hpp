#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "edpack/corpus.hpp"
#include "edpack/error.hpp"
#include "edpack/parallel.hpp"
#include "edpack/stream.hpp"
#include "edpack/text.hpp"
#include "edpack/utf8.hpp"

namespace edpack {

// Thresholds for the length and repetition filters. Line lengths are measured
// in code points after trimming surrounding whitespace.
struct FilterConfig {
  std::uint32_t min_nonempty_lines = 3;
  std::uint32_t short_line_char_limit = 10;
  double max_short_line_fraction = 0.5;
  std::uint32_t min_mean_line_chars = 20;
  double max_duplicate_line_ratio = 0.30;
  std::uint32_t ngram_order = 10;
  double max_top_ngram_coverage = 0.20;

  void validate() const {
    auto count = [](std::uint32_t v, const char* name) {
      if (v < 1) throw ConfigError(std::string("filter.") + name + " must be >= 1");
    };
    auto ratio = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("filter.") + name + " must be in [0, 1]");
    };
    count(min_nonempty_lines, "min_nonempty_lines");
    count(short_line_char_limit, "short_line_char_limit");
    count(min_mean_line_chars, "min_mean_line_chars");
    count(ngram_order, "ngram_order");
    ratio(max_short_line_fraction, "max_short_line_fraction");
    ratio(max_duplicate_line_ratio, "max_duplicate_line_ratio");
    ratio(max_top_ngram_coverage, "max_top_ngram_coverage");
  }
};

enum class FilterReason : std::uint8_t { Kept, TooFewLines, PredominantlyShort, DuplicateLines, RepeatedNgram };

inline constexpr std::array<FilterReason, 5> kAllFilterReasons = {
    FilterReason::Kept, FilterReason::TooFewLines, FilterReason::PredominantlyShort, FilterReason::DuplicateLines,
    FilterReason::RepeatedNgram};

inline constexpr std::string_view to_string(FilterReason r) noexcept {
  switch (r) {
    case FilterReason::Kept: return "Kept";
    case FilterReason::TooFewLines: return "TooFewLines";
    case FilterReason::PredominantlyShort: return "PredominantlyShort";
    case FilterReason::DuplicateLines: return "DuplicateLines";
    case FilterReason::RepeatedNgram: return "RepeatedNgram";
  }
  return "?";
}

struct FilterVerdict {
  bool keep = true;
  FilterReason reason = FilterReason::Kept;
  std::map<std::string, double> metrics;

  friend bool operator==(const FilterVerdict&, const FilterVerdict&) = default;
};

struct FilterReport {
  std::array<std::uint64_t, kAllFilterReasons.size()> counts{};

  std::uint64_t& operator[](FilterReason r) { return counts[static_cast<std::size_t>(r)]; }
  std::uint64_t operator[](FilterReason r) const { return counts[static_cast<std::size_t>(r)]; }

  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (auto r : kAllFilterReasons) j[std::string(to_string(r))] = (*this)[r];
    return j;
  }
};

inline FilterVerdict filter_length(const Document& doc, const FilterConfig& cfg) {
  FilterVerdict v;
  const auto lines = text::nonempty_lines(doc.text);
  const auto n = lines.size();
  v.metrics["nonempty_lines"] = static_cast<double>(n);
  if (n < cfg.min_nonempty_lines) {
    v.keep = false;
    v.reason = FilterReason::TooFewLines;
    return v;
  }
  std::size_t short_lines = 0;
  std::size_t total_chars = 0;
  for (auto line : lines) {
    const auto len = utf8::length(line);
    total_chars += len;
    if (len < cfg.short_line_char_limit) ++short_lines;
  }
  const double short_fraction = static_cast<double>(short_lines) / static_cast<double>(n);
  const double mean_chars = static_cast<double>(total_chars) / static_cast<double>(n);
  v.metrics["short_line_fraction"] = short_fraction;
  v.metrics["mean_line_chars"] = mean_chars;
  if (short_fraction > cfg.max_short_line_fraction || mean_chars < static_cast<double>(cfg.min_mean_line_chars)) {
    v.keep = false;
    v.reason = FilterReason::PredominantlyShort;
  }
  return v;
}

// Occurrence count of the most frequent word n-gram; 0 when there are fewer than `order` words.
inline std::size_t top_ngram_count(const std::vector<std::string_view>& words, std::size_t order) {
  if (order == 0 || words.size() < order) return 0;
  std::unordered_map<std::string_view, std::uint32_t> vocab;
  std::vector<std::uint32_t> ids;
  ids.reserve(words.size());
  for (auto w : words) ids.push_back(vocab.emplace(w, static_cast<std::uint32_t>(vocab.size())).first->second);

  std::unordered_map<std::string, std::size_t> counts;
  std::size_t best = 0;
  std::string key(order * sizeof(std::uint32_t), '\0');
  for (std::size_t i = 0; i + order <= ids.size(); ++i) {
    std::memcpy(key.data(), ids.data() + i, key.size());
    best = std::max(best, ++counts[key]);
  }
  return best;
}

inline FilterVerdict filter_repetition(const Document& doc, const FilterConfig& cfg) {
  FilterVerdict v;
  const auto lines = text::nonempty_lines(doc.text);
  double dup_ratio = 0.0;
  if (!lines.empty()) {
    const std::unordered_set<std::string_view> distinct(lines.begin(), lines.end());
    dup_ratio = 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(lines.size());
  }
  v.metrics["duplicate_line_ratio"] = dup_ratio;
  if (dup_ratio > cfg.max_duplicate_line_ratio) {
    v.keep = false;
    v.reason = FilterReason::DuplicateLines;
    return v;
  }

  const auto words = text::split_words(doc.text);
  double coverage = 0.0;
  std::size_t top = 0;
  if (words.size() >= cfg.ngram_order) {
    top = top_ngram_count(words, cfg.ngram_order);
    coverage = static_cast<double>(top * cfg.ngram_order) / static_cast<double>(words.size());
  }
  v.metrics["top_ngram_coverage"] = coverage;
  // An n-gram seen once is not repetition, however short the document.
  if (top >= 2 && coverage > cfg.max_top_ngram_coverage) {
    v.keep = false;
    v.reason = FilterReason::RepeatedNgram;
  }
  return v;
}

// Length filter first, then repetition; the first rejection wins.
inline FilterVerdict evaluate_filters(const Document& doc, const FilterConfig& cfg) {
  auto v = filter_length(doc, cfg);
  if (!v.keep) return v;
  auto rep = filter_repetition(doc, cfg);
  rep.metrics.insert(v.metrics.begin(), v.metrics.end());
  return rep;
}

// Emits kept documents to `kept` in input order. Verdicts are computed on up to
// `workers` threads in batches.
template <SourceOf<Document> S, class Sink>
FilterReport apply_filters(S& docs, const FilterConfig& cfg, Sink&& kept, unsigned workers = 1,
                           std::size_t batch_size = 1024) {
  FilterReport report;
  ordered_parallel_for_each(
      docs, [&cfg](const Document& d) { return evaluate_filters(d, cfg).reason; }, workers, batch_size,
      [&](Document&& doc, FilterReason reason) {
        ++report[reason];
        if (reason == FilterReason::Kept) kept(std::move(doc));
      });
  return report;
}

template <SourceOf<Document> S, class Sink>
FilterReport apply_filters(S&& docs, const FilterConfig& cfg, Sink&& kept, unsigned workers = 1,
                           std::size_t batch_size = 1024) {
  return apply_filters(docs, cfg, kept, workers, batch_size);
}

}  // namespace edpack
