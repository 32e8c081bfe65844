#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edpack/config.hpp"
#include "edpack/corpus.hpp"
#include "edpack/dedup.hpp"
#include "edpack/filter.hpp"
#include "edpack/pack.hpp"
#include "edpack/shard.hpp"
#include "edpack/tokenize.hpp"

namespace edpack {

// Concatenation of several JSONL files, read in the given order.
class MultiDocumentReader {
 public:
  using value_type = Document;

  explicit MultiDocumentReader(std::vector<std::filesystem::path> paths) : paths_(std::move(paths)) {}

  std::optional<Document> next() {
    while (true) {
      if (!current_) {
        if (idx_ >= paths_.size()) return std::nullopt;
        current_.emplace(paths_[idx_++]);
      }
      if (auto d = current_->next()) return d;
      current_.reset();
    }
  }

 private:
  std::vector<std::filesystem::path> paths_;
  std::size_t idx_ = 0;
  std::optional<DocumentReader> current_;
};

// Appends {"dropped_id", "kept_id"} audit lines.
class DedupSidecar {
 public:
  explicit DedupSidecar(const std::optional<std::filesystem::path>& path) {
    if (path) {
      out_.emplace(*path, std::ios::binary | std::ios::trunc);
      if (!*out_) throw IoError("cannot open " + path->string());
    }
  }

  void record(const std::string& dropped, const std::string& kept) {
    if (!out_) return;
    nlohmann::ordered_json j;
    j["dropped_id"] = dropped;
    j["kept_id"] = kept;
    *out_ << j.dump() << '\n';
    if (!*out_) throw IoError("sidecar write failure");
  }

 private:
  std::optional<std::ofstream> out_;
};

struct PipelineSummary {
  std::uint64_t input_docs = 0;
  FilterReport filter;
  std::uint64_t dedup_kept = 0;
  std::uint64_t dedup_dropped = 0;
  std::uint64_t tokenized_docs = 0;
  std::uint64_t tokens = 0;
  PackResult pack;
  std::vector<std::filesystem::path> shards;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["input_docs"] = input_docs;
    j["filter"] = filter.to_json();
    j["dedup"] = {{"kept", dedup_kept}, {"dropped", dedup_dropped}};
    j["tokenize"] = {{"docs", tokenized_docs}, {"tokens", tokens}};
    j["pack"] = {{"sequences", pack.sequences}, {"dropped_tail", pack.dropped_tail}, {"flat_length", pack.flat_length}};
    nlohmann::ordered_json names = nlohmann::ordered_json::array();
    for (const auto& p : shards) names.push_back(p.filename().string());
    j["shards"] = names;
    return j;
  }
};

inline std::filesystem::path shard_dir(const PipelineConfig& cfg) { return cfg.output_dir / "shards"; }

// filter -> dedup -> tokenize -> pack -> shard, streaming end to end.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg, const Encoder& encoder) {
  cfg.validate();
  if (cfg.inputs.empty()) throw ConfigError("pipeline needs at least one input file");
  PipelineSummary sum;

  ShardWriter shards(shard_dir(cfg), cfg.shard);
  Packer packer(cfg.pack, [&](PackedSequence&& s) { shards.write(s); });
  ParallelTokenizer tokenizer(encoder, cfg.workers, [&](TokenizedDoc&& t) {
    ++sum.tokenized_docs;
    sum.tokens += t.tokens.size();
    packer.push(t.tokens);
  });
  DedupIndex<> index(Murmur3Hasher{}, cfg.dedup.memory_budget);
  DedupSidecar sidecar(cfg.dedup.sidecar);

  MultiDocumentReader reader(cfg.inputs);
  sum.filter = apply_filters(
      reader, cfg.filter,
      [&](Document&& doc) {
        const auto outcome = index.admit(doc);
        if (outcome.duplicate) {
          sidecar.record(doc.id, outcome.kept_id);
        } else {
          tokenizer.push(std::move(doc));
        }
      },
      cfg.workers);
  tokenizer.finish();
  sum.input_docs = sum.filter.total();
  sum.dedup_kept = index.kept_count();
  sum.dedup_dropped = index.dropped_count();
  sum.pack = packer.finish();
  sum.shards = shards.close();
  return sum;
}

// ---- Individual stages, as exposed by the CLI subcommands ----

inline FilterReport stage_filter(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& output,
                                 const FilterConfig& cfg, unsigned workers) {
  cfg.validate();
  MultiDocumentReader reader(inputs);
  DocumentWriter writer(output);
  auto report = apply_filters(reader, cfg, [&](Document&& d) { writer.write(d); }, workers);
  writer.close();
  return report;
}

inline DedupResult stage_dedup(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& output,
                               const DedupConfig& cfg, unsigned workers) {
  MultiDocumentReader reader(inputs);
  DocumentWriter writer(output);
  DedupSidecar sidecar(cfg.sidecar);
  DedupOptions opts;
  opts.workers = workers;
  opts.memory_budget = cfg.memory_budget;
  const auto r = dedup_stream(
      reader, [&](Document&& d) { writer.write(d); },
      [&](const Document& d, const std::string& kept) { sidecar.record(d.id, kept); }, opts);
  writer.close();
  return r;
}

struct TokenizeSummary {
  std::uint64_t docs = 0;
  std::uint64_t tokens = 0;
};

inline TokenizeSummary stage_tokenize(const std::vector<std::filesystem::path>& inputs,
                                      const std::filesystem::path& output, const Encoder& encoder, unsigned workers) {
  MultiDocumentReader reader(inputs);
  TokenFileWriter writer(output);
  TokenizeSummary s;
  s.docs = tokenize_parallel(reader, encoder, workers, [&](TokenizedDoc&& t) {
    s.tokens += t.tokens.size();
    writer.write(t.tokens);
  });
  writer.close();
  return s;
}

// Packed sequences are stored in the token-file format, one record per sequence.
inline PackResult stage_pack(const std::filesystem::path& input, const std::filesystem::path& output,
                             const PackConfig& cfg) {
  TokenFileReader reader(input);
  TokenFileWriter writer(output);
  const auto r = pack_stream(reader, cfg, [&](PackedSequence&& s) { writer.write(s.tokens); });
  writer.close();
  return r;
}

class PackedFileReader {
 public:
  using value_type = PackedSequence;

  explicit PackedFileReader(const std::filesystem::path& path) : reader_(path) {}

  std::optional<PackedSequence> next() {
    auto rec = reader_.next();
    if (!rec) return std::nullopt;
    return PackedSequence{std::move(rec->tokens), ordinal_++};
  }

 private:
  TokenFileReader reader_;
  std::uint64_t ordinal_ = 0;
};

inline std::vector<std::filesystem::path> stage_shard(const std::filesystem::path& input,
                                                      const std::filesystem::path& dir, const ShardWriteConfig& cfg) {
  PackedFileReader reader(input);
  return write_shards(reader, dir, cfg);
}

}  // namespace edpack
