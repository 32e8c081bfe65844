#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "edpack/error.hpp"
#include "edpack/stream.hpp"
#include "edpack/tokenize.hpp"

namespace edpack {

struct PackConfig {
  std::uint32_t seq_len = 2000;
  bool insert_doc_sep = true;
  TokenId sep_id = 0;

  void validate() const {
    if (seq_len < 2) throw ConfigError("pack.seq_len must be >= 2");
  }
};

struct PackedSequence {
  std::vector<TokenId> tokens;
  std::uint64_t ordinal = 0;

  friend bool operator==(const PackedSequence&, const PackedSequence&) = default;
};

struct PackResult {
  std::uint64_t sequences = 0;
  std::uint64_t dropped_tail = 0;
  std::uint64_t flat_length = 0;
};

// Concatenates documents (each followed by sep_id when enabled) into one flat
// stream and cuts it into seq_len chunks. The final partial chunk is dropped,
// never padded. Holds at most seq_len + one document of tokens.
template <class Sink>
class Packer {
 public:
  Packer(PackConfig cfg, Sink sink) : cfg_(cfg), sink_(std::move(sink)) {
    cfg_.validate();
    pending_.reserve(2 * cfg_.seq_len);
  }

  void push(std::span<const TokenId> doc) {
    pending_.insert(pending_.end(), doc.begin(), doc.end());
    flat_ += doc.size();
    if (cfg_.insert_doc_sep) {
      pending_.push_back(cfg_.sep_id);
      ++flat_;
    }
    drain();
  }

  PackResult finish() {
    return PackResult{emitted_, static_cast<std::uint64_t>(pending_.size()), flat_};
  }

 private:
  void drain() {
    const std::size_t len = cfg_.seq_len;
    std::size_t pos = 0;
    while (pending_.size() - pos >= len) {
      PackedSequence seq;
      seq.tokens.assign(pending_.begin() + static_cast<std::ptrdiff_t>(pos),
                        pending_.begin() + static_cast<std::ptrdiff_t>(pos + len));
      seq.ordinal = emitted_++;
      sink_(std::move(seq));
      pos += len;
    }
    if (pos > 0) pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(pos));
  }

  PackConfig cfg_;
  Sink sink_;
  std::vector<TokenId> pending_;
  std::uint64_t emitted_ = 0;
  std::uint64_t flat_ = 0;
};

template <SourceOf<TokenizedDoc> S, class Sink>
PackResult pack_stream(S& docs, const PackConfig& cfg, Sink&& sink) {
  Packer packer(cfg, [&](PackedSequence&& s) { sink(std::move(s)); });
  while (auto doc = docs.next()) packer.push(doc->tokens);
  return packer.finish();
}

template <SourceOf<TokenizedDoc> S, class Sink>
PackResult pack_stream(S&& docs, const PackConfig& cfg, Sink&& sink) {
  return pack_stream(docs, cfg, sink);
}

}  // namespace edpack
