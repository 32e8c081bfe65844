#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "edpack/corpus.hpp"
#include "edpack/error.hpp"
#include "edpack/hash.hpp"
#include "edpack/parallel.hpp"
#include "edpack/stream.hpp"
#include "edpack/text.hpp"

namespace edpack {

// Strips trailing whitespace from every line and drops leading/trailing blank
// lines. Interior content is byte-preserved.
inline std::string canonicalize(std::string_view s) {
  auto lines = text::split_lines(s);
  for (auto& l : lines) l = text::rtrim(l);
  std::size_t b = 0;
  std::size_t e = lines.size();
  while (b < e && lines[b].empty()) ++b;
  while (e > b && lines[e - 1].empty()) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (i > b) out.push_back('\n');
    out.append(lines[i]);
  }
  return out;
}

// Holds canonical texts of kept documents. Once `memory_budget` bytes are
// resident, further texts go to an anonymous spill file and are re-read only
// when a hash match needs verifying.
class TextStore {
 public:
  struct Handle {
    std::uint64_t index = 0;
  };

  explicit TextStore(std::uint64_t memory_budget = UINT64_MAX) : budget_(memory_budget) {}

  Handle add(std::string text) {
    Entry e;
    e.length = text.size();
    if (resident_ + text.size() <= budget_) {
      resident_ += text.size();
      e.text = std::move(text);
    } else {
      e.spilled = true;
      e.offset = spill_append(text);
    }
    entries_.push_back(std::move(e));
    return Handle{entries_.size() - 1};
  }

  bool equals(Handle h, std::string_view candidate) const {
    const auto& e = entries_.at(h.index);
    if (e.length != candidate.size()) return false;
    if (!e.spilled) return e.text == candidate;
    return spill_read(e.offset, e.length) == candidate;
  }

  std::uint64_t resident_bytes() const noexcept { return resident_; }
  std::uint64_t spilled_count() const noexcept { return spilled_; }
  std::uint64_t spill_reads() const noexcept { return spill_reads_; }

 private:
  struct Entry {
    std::string text;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    bool spilled = false;
  };

  struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
  };

  std::uint64_t spill_append(const std::string& text) {
    if (!spill_) {
      spill_.reset(std::tmpfile());
      if (!spill_) throw IoError("cannot create dedup spill file");
    }
    if (std::fseek(spill_.get(), 0, SEEK_END) != 0) throw IoError("dedup spill seek failed");
    const long pos = std::ftell(spill_.get());
    if (pos < 0) throw IoError("dedup spill tell failed");
    if (!text.empty() && std::fwrite(text.data(), 1, text.size(), spill_.get()) != text.size()) {
      throw IoError("dedup spill write failed");
    }
    ++spilled_;
    return static_cast<std::uint64_t>(pos);
  }

  std::string spill_read(std::uint64_t offset, std::uint64_t length) const {
    std::string buf(length, '\0');
    ++spill_reads_;
    if (length == 0) return buf;
    if (std::fseek(spill_.get(), static_cast<long>(offset), SEEK_SET) != 0 ||
        std::fread(buf.data(), 1, length, spill_.get()) != length) {
      throw IoError("dedup spill read failed");
    }
    return buf;
  }

  std::uint64_t budget_;
  std::uint64_t resident_ = 0;
  std::uint64_t spilled_ = 0;
  mutable std::uint64_t spill_reads_ = 0;
  std::vector<Entry> entries_;
  std::unique_ptr<std::FILE, FileCloser> spill_;
};

struct DedupResult {
  std::uint64_t kept = 0;
  std::uint64_t dropped = 0;
};

// Exact keep-first dedup index over canonical text. The hash only narrows the
// candidate set; every hash match is confirmed by full text comparison.
template <class Hasher = Murmur3Hasher>
class DedupIndex {
 public:
  struct Outcome {
    bool duplicate = false;
    std::uint64_t kept_ordinal = 0;
    std::string kept_id;
  };

  explicit DedupIndex(Hasher hasher = Hasher{}, std::uint64_t memory_budget = UINT64_MAX)
      : hasher_(std::move(hasher)), store_(memory_budget) {}

  Hash128 hash(std::string_view canonical) const { return hasher_(canonical); }

  // Admission must happen in input order for keep-first to be deterministic.
  Outcome admit(const std::string& doc_id, std::string canonical, Hash128 h) {
    const std::uint64_t ordinal = kept_count_ + dropped_count_;
    auto& bucket = seen_[h];
    for (const auto& entry : bucket) {
      if (store_.equals(entry.handle, canonical)) {
        ++dropped_count_;
        return Outcome{true, entry.ordinal, entry.id};
      }
    }
    if (!bucket.empty()) ++bucket_collisions_;
    bucket.push_back(Entry{ordinal, doc_id, store_.add(std::move(canonical))});
    ++kept_count_;
    return Outcome{};
  }

  Outcome admit(const Document& doc) {
    auto canonical = canonicalize(doc.text);
    const auto h = hash(canonical);
    return admit(doc.id, std::move(canonical), h);
  }

  std::uint64_t kept_count() const noexcept { return kept_count_; }
  std::uint64_t dropped_count() const noexcept { return dropped_count_; }
  // Distinct texts that landed in an already-occupied hash bucket.
  std::uint64_t bucket_collisions() const noexcept { return bucket_collisions_; }
  const TextStore& store() const noexcept { return store_; }

 private:
  struct Entry {
    std::uint64_t ordinal;
    std::string id;
    TextStore::Handle handle;
  };

  Hasher hasher_;
  TextStore store_;
  std::unordered_map<Hash128, std::vector<Entry>, Hash128Hasher> seen_;
  std::uint64_t kept_count_ = 0;
  std::uint64_t dropped_count_ = 0;
  std::uint64_t bucket_collisions_ = 0;
};

struct DedupOptions {
  unsigned workers = 1;
  std::size_t batch_size = 1024;
  std::uint64_t memory_budget = UINT64_MAX;
};

// Emits unique documents to `unique` in input order; on_drop(dropped_doc, kept_id)
// is called for every dropped duplicate.
template <SourceOf<Document> S, class Sink, class OnDrop, class Hasher = Murmur3Hasher>
DedupResult dedup_stream(S& docs, Sink&& unique, OnDrop&& on_drop, const DedupOptions& opts = {},
                         Hasher hasher = Hasher{}) {
  DedupIndex<Hasher> index(std::move(hasher), opts.memory_budget);
  struct Prepared {
    std::string canonical;
    Hash128 hash;
  };
  ordered_parallel_for_each(
      docs,
      [&index](const Document& d) {
        auto c = canonicalize(d.text);
        const auto h = index.hash(c);
        return Prepared{std::move(c), h};
      },
      opts.workers, opts.batch_size,
      [&](Document&& doc, Prepared&& prep) {
        auto outcome = index.admit(doc.id, std::move(prep.canonical), prep.hash);
        if (outcome.duplicate) {
          on_drop(doc, outcome.kept_id);
        } else {
          unique(std::move(doc));
        }
      });
  return DedupResult{index.kept_count(), index.dropped_count()};
}

template <SourceOf<Document> S, class Sink>
DedupResult dedup_stream(S& docs, Sink&& unique) {
  return dedup_stream(docs, unique, [](const Document&, const std::string&) {});
}

template <SourceOf<Document> S>
std::pair<std::vector<Document>, std::uint64_t> dedup_all(S&& docs, const DedupOptions& opts = {}) {
  std::vector<Document> out;
  const auto r = dedup_stream(
      docs, [&](Document&& d) { out.push_back(std::move(d)); }, [](const Document&, const std::string&) {}, opts);
  return {std::move(out), r.dropped};
}

}  // namespace edpack
