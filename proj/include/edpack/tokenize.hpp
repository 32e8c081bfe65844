#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "edpack/corpus.hpp"
#include "edpack/error.hpp"
#include "edpack/parallel.hpp"
#include "edpack/stream.hpp"

namespace edpack {

using TokenId = std::uint32_t;

struct TokenizerSpec {
  std::string name = "byte";
  std::uint32_t vocab_size = 259;
  TokenId doc_sep = 0;
  TokenId bos = 1;
  TokenId reserved = 2;
  std::uint32_t byte_offset = 3;

  bool is_special(TokenId id) const noexcept { return id == doc_sep || id == bos || id == reserved; }

  void validate() const {
    if (doc_sep == bos || doc_sep == reserved || bos == reserved) {
      throw ConfigError("tokenizer special ids must be pairwise distinct");
    }
    if (doc_sep >= byte_offset || bos >= byte_offset || reserved >= byte_offset) {
      throw ConfigError("tokenizer special ids must be below byte_offset");
    }
    if (vocab_size <= byte_offset) throw ConfigError("tokenizer vocab_size must exceed byte_offset");
  }
};

struct TokenizedDoc {
  std::string id;
  std::vector<TokenId> tokens;

  friend bool operator==(const TokenizedDoc&, const TokenizedDoc&) = default;
};

// Tokenizer contract. encode() must be safe to call concurrently.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual const TokenizerSpec& spec() const noexcept = 0;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
};

inline std::vector<TokenId> encode_bytes(std::string_view text, const TokenizerSpec& spec) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (const char c : text) out.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)) + spec.byte_offset);
  return out;
}

inline std::string decode_bytes(std::span<const TokenId> tokens, const TokenizerSpec& spec) {
  std::string out;
  out.reserve(tokens.size());
  for (const TokenId t : tokens) {
    if (t < spec.byte_offset || t - spec.byte_offset > 0xFF) {
      throw DataError("token " + std::to_string(t) + " is not a byte token");
    }
    out.push_back(static_cast<char>(t - spec.byte_offset));
  }
  return out;
}

// Reversible byte-level tokenizer: one token per UTF-8 byte, shifted past the special ids.
class ByteTokenizer final : public Encoder {
 public:
  ByteTokenizer() = default;
  explicit ByteTokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.vocab_size < spec_.byte_offset + 256) {
      throw ConfigError("byte tokenizer needs vocab_size >= byte_offset + 256");
    }
  }

  const TokenizerSpec& spec() const noexcept override { return spec_; }
  std::vector<TokenId> encode(std::string_view text) const override { return encode_bytes(text, spec_); }
  std::string decode(std::span<const TokenId> tokens) const { return decode_bytes(tokens, spec_); }

 private:
  TokenizerSpec spec_;
};

class TokenizeError : public DataError {
 public:
  TokenizeError(std::string doc_id, const std::string& what)
      : DataError("tokenizing document \"" + doc_id + "\": " + what), doc_id_(std::move(doc_id)) {}
  const std::string& doc_id() const noexcept { return doc_id_; }

 private:
  std::string doc_id_;
};

inline TokenizedDoc tokenize_one(const Document& doc, const Encoder& encoder) {
  std::vector<TokenId> tokens;
  try {
    tokens = encoder.encode(doc.text);
  } catch (const std::exception& e) {
    throw TokenizeError(doc.id, e.what());
  }
  const auto& spec = encoder.spec();
  for (const TokenId t : tokens) {
    if (t >= spec.vocab_size) throw TokenizeError(doc.id, "token id " + std::to_string(t) + " >= vocab_size");
    if (spec.is_special(t)) throw TokenizeError(doc.id, "encoder emitted special id " + std::to_string(t));
  }
  if (tokens.empty() && !doc.text.empty()) throw TokenizeError(doc.id, "non-empty text produced no tokens");
  return TokenizedDoc{doc.id, std::move(tokens)};
}

// Push-style order-stable tokenizer: documents are buffered into batches,
// encoded on up to `workers` threads, and handed to the sink in push order.
template <class Sink>
class ParallelTokenizer {
 public:
  ParallelTokenizer(const Encoder& encoder, unsigned workers, Sink sink, std::size_t batch_size = 1024)
      : encoder_(encoder), workers_(workers < 1 ? 1 : workers), batch_size_(batch_size < 1 ? 1 : batch_size),
        sink_(std::move(sink)) {
    batch_.reserve(batch_size_);
  }

  void push(Document doc) {
    batch_.push_back(std::move(doc));
    if (batch_.size() >= batch_size_) flush();
  }

  void finish() { flush(); }

 private:
  void flush() {
    if (batch_.empty()) return;
    auto out = parallel_map(batch_, [this](const Document& d) { return tokenize_one(d, encoder_); }, workers_);
    batch_.clear();
    for (auto& t : out) sink_(std::move(t));
  }

  const Encoder& encoder_;
  unsigned workers_;
  std::size_t batch_size_;
  Sink sink_;
  std::vector<Document> batch_;
};

template <SourceOf<Document> S, class Sink>
std::uint64_t tokenize_parallel(S& docs, const Encoder& encoder, unsigned workers, Sink&& sink,
                                std::size_t batch_size = 1024) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  std::uint64_t n = 0;
  ParallelTokenizer tok(
      encoder, workers,
      [&](TokenizedDoc&& t) {
        ++n;
        sink(std::move(t));
      },
      batch_size);
  while (auto doc = docs.next()) tok.push(std::move(*doc));
  tok.finish();
  return n;
}

template <SourceOf<Document> S, class Sink>
std::uint64_t tokenize_parallel(S&& docs, const Encoder& encoder, unsigned workers, Sink&& sink,
                                std::size_t batch_size = 1024) {
  return tokenize_parallel(docs, encoder, workers, sink, batch_size);
}

namespace detail {

inline void put_le(std::string& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) noexcept {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

// Token stream file: per record a u64 LE count followed by that many u32 LE ids.
class TokenFileWriter {
 public:
  explicit TokenFileWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }

  void write(std::span<const TokenId> tokens) {
    buf_.clear();
    detail::put_le(buf_, tokens.size(), 8);
    for (const TokenId t : tokens) detail::put_le(buf_, t, 4);
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out_) throw IoError("write failure on " + path_.string());
    ++records_;
  }

  std::uint64_t close() {
    out_.flush();
    if (!out_) throw IoError("write failure on " + path_.string());
    out_.close();
    return records_;
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::string buf_;
  std::uint64_t records_ = 0;
};

// Records carry no document ids on disk; ids are synthesized as "#<ordinal>".
class TokenFileReader {
 public:
  using value_type = TokenizedDoc;

  explicit TokenFileReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  std::optional<TokenizedDoc> next() {
    unsigned char head[8];
    in_.read(reinterpret_cast<char*>(head), 8);
    if (in_.gcount() == 0 && in_.eof()) return std::nullopt;
    if (in_.gcount() != 8) throw DataError(path_.string() + ": truncated record header");
    const std::uint64_t count = detail::get_le(head, 8);
    if (count > (std::uint64_t{1} << 40)) throw DataError(path_.string() + ": implausible record length");
    std::vector<unsigned char> raw(count * 4);
    in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::uint64_t>(in_.gcount()) != raw.size()) throw DataError(path_.string() + ": truncated record");
    TokenizedDoc doc;
    doc.id = "#" + std::to_string(ordinal_++);
    doc.tokens.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) doc.tokens[i] = static_cast<TokenId>(detail::get_le(&raw[i * 4], 4));
    return doc;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t ordinal_ = 0;
};

}  // namespace edpack
