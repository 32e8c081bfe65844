#pragma once

// EDSH shard container.
//
// Layout, all integers little-endian:
//
//   offset  size  field
//   0       4     magic "EDSH"
//   4       2     version (1)
//   6       2     flags (bit0: frames compressed)
//   8       4     seq_len
//   12      1     token_width (2 or 4)
//   13      1     codec (0 none, 1 raw DEFLATE / RFC 1951)
//   14      4     frame_size (sequences per frame)
//   18      8     num_sequences
//   26      8     frame_count = ceil(num_sequences / frame_size)
//   34      8*n   absolute byte offset of each frame
//
// A frame is the (optionally compressed) concatenation of its sequences' raw
// token bytes. Frame i spans [offset[i], offset[i+1]), the last frame ends at EOF.

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "edpack/error.hpp"
#include "edpack/pack.hpp"
#include "edpack/shuffle.hpp"
#include "edpack/stream.hpp"
#include "edpack/tokenize.hpp"

namespace edpack {

inline constexpr char kShardMagic[4] = {'E', 'D', 'S', 'H'};
inline constexpr std::uint16_t kShardVersion = 1;
inline constexpr std::uint16_t kShardFlagCompressed = 0x1;
inline constexpr std::size_t kShardFixedHeaderSize = 34;
inline constexpr int kDeflateLevel = 6;

enum class Codec : std::uint8_t { None = 0, Deflate = 1 };

struct ShardHeader {
  std::uint16_t version = kShardVersion;
  std::uint16_t flags = 0;
  std::uint32_t seq_len = 0;
  std::uint8_t token_width = 4;
  Codec codec = Codec::None;
  std::uint32_t frame_size = 0;
  std::uint64_t num_sequences = 0;
  std::uint64_t frame_count = 0;
  std::vector<std::uint64_t> frame_offsets;

  std::uint64_t header_size() const noexcept { return kShardFixedHeaderSize + 8 * frame_count; }

  std::uint64_t sequences_in_frame(std::uint64_t frame) const noexcept {
    const std::uint64_t start = frame * frame_size;
    return std::min<std::uint64_t>(frame_size, num_sequences - start);
  }

  std::uint64_t frame_raw_bytes(std::uint64_t frame) const noexcept {
    return sequences_in_frame(frame) * seq_len * token_width;
  }

  friend bool operator==(const ShardHeader&, const ShardHeader&) = default;
};

namespace detail {

inline void append_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t read_le(std::string_view buf, std::size_t pos, int bytes) noexcept {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf[pos + i]);
  return v;
}

inline std::string deflate_raw(std::string_view input) {
  z_stream zs{};
  if (deflateInit2(&zs, kDeflateLevel, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("deflateInit2 failed");
  }
  std::string out(deflateBound(&zs, static_cast<uLong>(input.size())), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(input.data()));
  zs.avail_in = static_cast<uInt>(input.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("deflate failed");
  out.resize(produced);
  return out;
}

// Inflates exactly `expected` bytes; any shortfall, excess or trailing input is an error.
inline std::string inflate_raw(std::string_view input, std::uint64_t expected) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw IoError("inflateInit2 failed");
  std::string out(expected + 1, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(input.data()));
  zs.avail_in = static_cast<uInt>(input.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  const auto leftover = zs.avail_in;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced < expected) throw DataError("truncated or corrupt frame");
  if (produced > expected) throw DataError("frame decompresses past its declared size");
  if (leftover != 0) throw DataError("trailing bytes after compressed frame");
  out.resize(expected);
  return out;
}

}  // namespace detail

inline std::string encode_header(const ShardHeader& h) {
  std::string out(kShardMagic, 4);
  detail::append_le(out, h.version, 2);
  detail::append_le(out, h.flags, 2);
  detail::append_le(out, h.seq_len, 4);
  detail::append_le(out, h.token_width, 1);
  detail::append_le(out, static_cast<std::uint8_t>(h.codec), 1);
  detail::append_le(out, h.frame_size, 4);
  detail::append_le(out, h.num_sequences, 8);
  detail::append_le(out, h.frame_count, 8);
  for (const auto off : h.frame_offsets) detail::append_le(out, off, 8);
  return out;
}

// Random-access byte source so readers can be instrumented in tests.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::uint64_t size() const = 0;
  virtual std::string read_at(std::uint64_t offset, std::uint64_t length) = 0;
};

class FileByteSource final : public ByteSource {
 public:
  explicit FileByteSource(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
    std::error_code ec;
    size_ = std::filesystem::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  }

  std::uint64_t size() const override { return size_; }

  std::string read_at(std::uint64_t offset, std::uint64_t length) override {
    if (offset > size_ || length > size_ - offset) {
      throw DataError(path_.string() + ": read past end of file (truncated shard)");
    }
    std::string buf(length, '\0');
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offset));
    in_.read(buf.data(), static_cast<std::streamsize>(length));
    if (static_cast<std::uint64_t>(in_.gcount()) != length) throw IoError("short read on " + path_.string());
    return buf;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
};

using ByteSourceFactory = std::function<std::unique_ptr<ByteSource>(const std::filesystem::path&)>;

inline ByteSourceFactory file_source_factory() {
  return [](const std::filesystem::path& p) { return std::make_unique<FileByteSource>(p); };
}

// Reads and validates the header and offset table.
inline ShardHeader read_header(ByteSource& src, const std::string& name = "shard") {
  const auto fail = [&](const std::string& msg) { return DataError(name + ": " + msg); };
  if (src.size() < kShardFixedHeaderSize) throw fail("file shorter than header");
  const std::string fixed = src.read_at(0, kShardFixedHeaderSize);
  if (fixed.compare(0, 4, std::string_view(kShardMagic, 4)) != 0) throw fail("bad magic");
  ShardHeader h;
  h.version = static_cast<std::uint16_t>(detail::read_le(fixed, 4, 2));
  if (h.version != kShardVersion) throw fail("unsupported version " + std::to_string(h.version));
  h.flags = static_cast<std::uint16_t>(detail::read_le(fixed, 6, 2));
  h.seq_len = static_cast<std::uint32_t>(detail::read_le(fixed, 8, 4));
  h.token_width = static_cast<std::uint8_t>(detail::read_le(fixed, 12, 1));
  const auto codec = static_cast<std::uint8_t>(detail::read_le(fixed, 13, 1));
  h.frame_size = static_cast<std::uint32_t>(detail::read_le(fixed, 14, 4));
  h.num_sequences = detail::read_le(fixed, 18, 8);
  h.frame_count = detail::read_le(fixed, 26, 8);

  if (codec > 1) throw fail("unknown codec " + std::to_string(codec));
  h.codec = static_cast<Codec>(codec);
  if ((h.flags & ~kShardFlagCompressed) != 0) throw fail("unknown flag bits");
  if (((h.flags & kShardFlagCompressed) != 0) != (h.codec != Codec::None)) throw fail("flags disagree with codec");
  if (h.token_width != 2 && h.token_width != 4) throw fail("token_width must be 2 or 4");
  if (h.seq_len == 0) throw fail("seq_len is zero");
  if (h.frame_size == 0) throw fail("frame_size is zero");
  if (h.frame_count != (h.num_sequences + h.frame_size - 1) / h.frame_size) throw fail("frame_count inconsistent");
  if (h.frame_count > (src.size() - kShardFixedHeaderSize) / 8) throw fail("offset table exceeds file size");

  const std::string table = src.read_at(kShardFixedHeaderSize, 8 * h.frame_count);
  h.frame_offsets.resize(h.frame_count);
  std::uint64_t prev = h.header_size();
  for (std::uint64_t i = 0; i < h.frame_count; ++i) {
    const auto off = detail::read_le(table, 8 * i, 8);
    if (i == 0 ? off != prev : off <= prev) throw fail("offset table inconsistent at frame " + std::to_string(i));
    if (off >= src.size()) throw fail("frame " + std::to_string(i) + " starts past end of file");
    h.frame_offsets[i] = off;
    prev = off;
  }
  if (h.frame_count == 0 && src.size() != h.header_size()) throw fail("trailing bytes in empty shard");
  return h;
}

// Byte range [begin, end) of a frame.
inline std::pair<std::uint64_t, std::uint64_t> frame_extent(const ShardHeader& h, std::uint64_t frame,
                                                            std::uint64_t file_size) {
  const std::uint64_t begin = h.frame_offsets.at(frame);
  const std::uint64_t end = frame + 1 < h.frame_count ? h.frame_offsets[frame + 1] : file_size;
  return {begin, end};
}

inline std::vector<PackedSequence> decode_frame(ByteSource& src, const ShardHeader& h, std::uint64_t frame,
                                                std::uint64_t first_ordinal, const std::string& name = "shard") {
  const auto [begin, end] = frame_extent(h, frame, src.size());
  const std::uint64_t raw_bytes = h.frame_raw_bytes(frame);
  std::string stored = src.read_at(begin, end - begin);
  std::string raw;
  if (h.codec == Codec::None) {
    if (stored.size() < raw_bytes) throw DataError(name + ": truncated frame " + std::to_string(frame));
    if (stored.size() > raw_bytes) throw DataError(name + ": frame " + std::to_string(frame) + " size mismatch");
    raw = std::move(stored);
  } else {
    try {
      raw = detail::inflate_raw(stored, raw_bytes);
    } catch (const DataError& e) {
      throw DataError(name + ": frame " + std::to_string(frame) + ": " + e.what());
    }
  }

  const std::uint64_t n = h.sequences_in_frame(frame);
  const int w = h.token_width;
  std::vector<PackedSequence> out(n);
  std::size_t pos = 0;
  for (std::uint64_t s = 0; s < n; ++s) {
    auto& seq = out[s];
    seq.ordinal = first_ordinal + s;
    seq.tokens.resize(h.seq_len);
    for (std::uint32_t t = 0; t < h.seq_len; ++t, pos += w) {
      seq.tokens[t] = static_cast<TokenId>(detail::read_le(raw, pos, w));
    }
  }
  return out;
}

struct ShardWriteConfig {
  std::uint64_t max_seqs_per_shard = 65536;
  std::uint32_t frame_size = 64;
  Codec codec = Codec::Deflate;
  std::uint8_t token_width = 4;
  // Emit one empty shard when no sequences arrive (default: no files).
  bool write_empty = false;

  void validate() const {
    if (max_seqs_per_shard < 1) throw ConfigError("shard.max_seqs_per_shard must be >= 1");
    if (frame_size < 1) throw ConfigError("shard.frame_size must be >= 1");
    if (token_width != 2 && token_width != 4) throw ConfigError("shard.token_width must be 2 or 4");
    if (codec != Codec::None && codec != Codec::Deflate) throw ConfigError("shard.codec must be none or deflate");
  }
};

inline std::string shard_file_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shard-%05llu.edsh", static_cast<unsigned long long>(index));
  return buf;
}

// Writes shard-%05d.edsh files into a directory. Frame bodies are staged in a
// temporary file until the shard's frame count (and hence its header) is known.
class ShardWriter {
 public:
  ShardWriter(std::filesystem::path dir, ShardWriteConfig cfg) : dir_(std::move(dir)), cfg_(cfg) {
    cfg_.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
  }

  ShardWriter(const ShardWriter&) = delete;
  ShardWriter& operator=(const ShardWriter&) = delete;

  ~ShardWriter() {
    if (body_.is_open()) {
      body_.close();
      std::error_code ec;
      std::filesystem::remove(body_path_, ec);
    }
  }

  void write(const PackedSequence& seq) {
    if (seq_len_ == 0) {
      if (seq.tokens.empty()) throw DataError("cannot shard an empty sequence");
      seq_len_ = static_cast<std::uint32_t>(seq.tokens.size());
    } else if (seq.tokens.size() != seq_len_) {
      throw DataError("sequence " + std::to_string(seq.ordinal) + " has length " + std::to_string(seq.tokens.size()) +
                      ", expected " + std::to_string(seq_len_));
    }
    const std::uint64_t limit = cfg_.token_width == 2 ? 0xFFFFu : 0xFFFFFFFFu;
    for (const TokenId t : seq.tokens) {
      if (t > limit) {
        throw DataError("token " + std::to_string(t) + " overflows token_width " + std::to_string(cfg_.token_width));
      }
    }
    if (!body_.is_open()) open_shard();
    for (const TokenId t : seq.tokens) detail::append_le(frame_buf_, t, cfg_.token_width);
    ++frame_seqs_;
    ++shard_seqs_;
    if (frame_seqs_ == cfg_.frame_size) flush_frame();
    if (shard_seqs_ == cfg_.max_seqs_per_shard) close_shard();
  }

  std::vector<std::filesystem::path> close() {
    if (body_.is_open()) close_shard();
    if (paths_.empty() && cfg_.write_empty) {
      ShardHeader h;
      h.seq_len = seq_len_ == 0 ? 1 : seq_len_;
      h.token_width = cfg_.token_width;
      h.codec = cfg_.codec;
      h.flags = cfg_.codec == Codec::None ? 0 : kShardFlagCompressed;
      h.frame_size = cfg_.frame_size;
      const auto path = dir_ / shard_file_name(0);
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      const auto bytes = encode_header(h);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw IoError("write failure on " + path.string());
      paths_.push_back(path);
    }
    return paths_;
  }

  std::uint64_t sequences_written() const noexcept { return total_seqs_; }

 private:
  void open_shard() {
    final_path_ = dir_ / shard_file_name(paths_.size());
    body_path_ = final_path_;
    body_path_ += ".body.tmp";
    body_.open(body_path_, std::ios::binary | std::ios::trunc);
    if (!body_) throw IoError("cannot open " + body_path_.string());
    body_offsets_.clear();
    body_size_ = 0;
    shard_seqs_ = 0;
    frame_seqs_ = 0;
    frame_buf_.clear();
  }

  void flush_frame() {
    if (frame_seqs_ == 0) return;
    const std::string stored = cfg_.codec == Codec::Deflate ? detail::deflate_raw(frame_buf_) : frame_buf_;
    body_offsets_.push_back(body_size_);
    body_.write(stored.data(), static_cast<std::streamsize>(stored.size()));
    if (!body_) throw IoError("write failure on " + body_path_.string());
    body_size_ += stored.size();
    frame_buf_.clear();
    frame_seqs_ = 0;
  }

  void close_shard() {
    flush_frame();
    body_.close();
    if (!body_) throw IoError("write failure on " + body_path_.string());

    ShardHeader h;
    h.seq_len = seq_len_;
    h.token_width = cfg_.token_width;
    h.codec = cfg_.codec;
    h.flags = cfg_.codec == Codec::None ? 0 : kShardFlagCompressed;
    h.frame_size = cfg_.frame_size;
    h.num_sequences = shard_seqs_;
    h.frame_count = body_offsets_.size();
    const std::uint64_t base = h.header_size();
    for (const auto off : body_offsets_) h.frame_offsets.push_back(base + off);

    std::ofstream out(final_path_, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + final_path_.string());
    const auto header = encode_header(h);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    {
      std::ifstream body(body_path_, std::ios::binary);
      if (!body) throw IoError("cannot reopen " + body_path_.string());
      out << body.rdbuf();
    }
    out.close();
    if (!out) throw IoError("write failure on " + final_path_.string());
    std::error_code ec;
    std::filesystem::remove(body_path_, ec);

    total_seqs_ += shard_seqs_;
    paths_.push_back(final_path_);
    shard_seqs_ = 0;
  }

  std::filesystem::path dir_;
  ShardWriteConfig cfg_;
  std::uint32_t seq_len_ = 0;
  std::vector<std::filesystem::path> paths_;
  std::filesystem::path final_path_;
  std::filesystem::path body_path_;
  std::ofstream body_;
  std::vector<std::uint64_t> body_offsets_;
  std::uint64_t body_size_ = 0;
  std::uint64_t shard_seqs_ = 0;
  std::uint64_t frame_seqs_ = 0;
  std::uint64_t total_seqs_ = 0;
  std::string frame_buf_;
};

template <SourceOf<PackedSequence> S>
std::vector<std::filesystem::path> write_shards(S& seqs, const std::filesystem::path& dir,
                                                const ShardWriteConfig& cfg) {
  ShardWriter writer(dir, cfg);
  while (auto s = seqs.next()) writer.write(*s);
  return writer.close();
}

template <SourceOf<PackedSequence> S>
std::vector<std::filesystem::path> write_shards(S&& seqs, const std::filesystem::path& dir,
                                                const ShardWriteConfig& cfg) {
  return write_shards(seqs, dir, cfg);
}

struct StreamConfig {
  std::uint32_t rank = 0;
  std::uint32_t world_size = 1;
  std::uint64_t shuffle_buffer = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (world_size < 1) throw ConfigError("stream.world_size must be >= 1");
    if (rank >= world_size) throw ConfigError("stream.rank must be < world_size");
  }
};

// Rank-strided streaming reader. Frames are numbered globally across the
// ordered shard list; this rank decodes only frames with index % world_size ==
// rank, one at a time. Sequence ordinals are global positions in the corpus.
class ShardStream {
 public:
  using value_type = PackedSequence;

  ShardStream(std::vector<std::filesystem::path> paths, std::uint32_t rank, std::uint32_t world_size,
              ByteSourceFactory factory = file_source_factory())
      : rank_(rank), world_size_(world_size) {
    StreamConfig{rank, world_size, 0, 0}.validate();
    std::uint64_t frame_base = 0;
    std::uint64_t seq_base = 0;
    for (auto& p : paths) {
      Shard s;
      s.name = p.string();
      s.source = factory(p);
      s.header = read_header(*s.source, s.name);
      if (!shards_.empty() && s.header.seq_len != shards_.front().header.seq_len) {
        throw DataError(s.name + ": seq_len " + std::to_string(s.header.seq_len) + " differs from first shard");
      }
      s.first_frame = frame_base;
      s.first_seq = seq_base;
      frame_base += s.header.frame_count;
      seq_base += s.header.num_sequences;
      shards_.push_back(std::move(s));
    }
    total_frames_ = frame_base;
    next_frame_ = rank_;
  }

  std::optional<PackedSequence> next() {
    while (pos_ >= current_.size()) {
      if (!load_next_frame()) return std::nullopt;
    }
    return std::move(current_[pos_++]);
  }

  std::uint64_t total_frames() const noexcept { return total_frames_; }
  std::uint32_t seq_len() const noexcept { return shards_.empty() ? 0 : shards_.front().header.seq_len; }
  // Global indices of frames decoded so far, in order.
  const std::vector<std::uint64_t>& frames_decoded() const noexcept { return decoded_; }

 private:
  struct Shard {
    std::string name;
    std::unique_ptr<ByteSource> source;
    ShardHeader header;
    std::uint64_t first_frame = 0;
    std::uint64_t first_seq = 0;
  };

  bool load_next_frame() {
    if (next_frame_ >= total_frames_) return false;
    const std::uint64_t g = next_frame_;
    next_frame_ += world_size_;
    while (shard_idx_ + 1 < shards_.size() && g >= shards_[shard_idx_ + 1].first_frame) ++shard_idx_;
    while (g >= shards_[shard_idx_].first_frame + shards_[shard_idx_].header.frame_count) ++shard_idx_;
    auto& s = shards_[shard_idx_];
    const std::uint64_t local = g - s.first_frame;
    current_ = decode_frame(*s.source, s.header, local, s.first_seq + local * s.header.frame_size, s.name);
    pos_ = 0;
    decoded_.push_back(g);
    return true;
  }

  std::uint32_t rank_;
  std::uint32_t world_size_;
  std::vector<Shard> shards_;
  std::uint64_t total_frames_ = 0;
  std::uint64_t next_frame_ = 0;
  std::size_t shard_idx_ = 0;
  std::vector<PackedSequence> current_;
  std::size_t pos_ = 0;
  std::vector<std::uint64_t> decoded_;
};

// Rank stream, optionally passed through the bounded shuffle buffer.
class SequenceStream {
 public:
  using value_type = PackedSequence;

  SequenceStream(std::vector<std::filesystem::path> paths, const StreamConfig& cfg,
                 ByteSourceFactory factory = file_source_factory()) {
    cfg.validate();
    ShardStream base(std::move(paths), cfg.rank, cfg.world_size, std::move(factory));
    if (cfg.shuffle_buffer > 0) {
      shuffled_.emplace(std::move(base), static_cast<std::size_t>(cfg.shuffle_buffer), cfg.seed);
    } else {
      plain_.emplace(std::move(base));
    }
  }

  std::optional<PackedSequence> next() { return shuffled_ ? shuffled_->next() : plain_->next(); }

  const ShardStream& shards() const noexcept { return shuffled_ ? shuffled_->upstream() : *plain_; }

 private:
  std::optional<ShardStream> plain_;
  std::optional<Shuffler<ShardStream>> shuffled_;
};

inline SequenceStream stream_read(std::vector<std::filesystem::path> paths, const StreamConfig& cfg,
                                  ByteSourceFactory factory = file_source_factory()) {
  return SequenceStream(std::move(paths), cfg, std::move(factory));
}

// Shard files in a directory, sorted by name.
inline std::vector<std::filesystem::path> list_shards(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && e.path().extension() == ".edsh") out.push_back(e.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace edpack
