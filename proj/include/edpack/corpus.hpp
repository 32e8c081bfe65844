#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>

#include <json.hpp>

#include "edpack/error.hpp"
#include "edpack/stream.hpp"
#include "edpack/text.hpp"
#include "edpack/utf8.hpp"

namespace edpack {

struct Document {
  std::string id;
  std::string text;
  std::map<std::string, std::string> meta;

  friend bool operator==(const Document&, const Document&) = default;
};

struct CorpusStats {
  std::uint64_t doc_count = 0;
  std::uint64_t total_chars = 0;
  std::uint64_t total_nonempty_lines = 0;
  double mean_doc_chars = 0.0;
};

namespace detail {

inline Document document_from_json(const nlohmann::json& j, std::uint64_t line_no) {
  const auto where = "line " + std::to_string(line_no) + ": ";
  if (!j.is_object()) throw DataError(where + "expected a JSON object");
  const auto id_it = j.find("id");
  const auto text_it = j.find("text");
  if (id_it == j.end() || !id_it->is_string()) throw DataError(where + "missing string field \"id\"");
  if (text_it == j.end() || !text_it->is_string()) throw DataError(where + "missing string field \"text\"");

  Document doc;
  doc.id = id_it->get<std::string>();
  doc.text = text_it->get<std::string>();
  if (doc.id.empty()) throw DataError(where + "empty \"id\"");
  if (!utf8::valid(doc.id) || !utf8::valid(doc.text)) throw DataError(where + "invalid UTF-8");

  if (const auto meta_it = j.find("meta"); meta_it != j.end() && !meta_it->is_null()) {
    if (!meta_it->is_object()) throw DataError(where + "\"meta\" must be an object");
    for (const auto& [k, v] : meta_it->items()) {
      if (!v.is_string()) throw DataError(where + "meta value for \"" + k + "\" is not a string");
      doc.meta.emplace(k, v.get<std::string>());
    }
  }
  return doc;
}

}  // namespace detail

// Lazily reads a JSONL document file. Blank lines are skipped.
class DocumentReader {
 public:
  using value_type = Document;

  explicit DocumentReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  std::optional<Document> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path_.string() + ": line " + std::to_string(line_no_) + ": malformed JSON: " + e.what());
      }
      try {
        return detail::document_from_json(j, line_no_);
      } catch (const DataError& e) {
        throw DataError(path_.string() + ": " + e.what());
      }
    }
    if (in_.bad()) throw IoError("read failure on " + path_.string());
    return std::nullopt;
  }

  std::uint64_t line_number() const noexcept { return line_no_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t line_no_ = 0;
};

inline DocumentReader read_documents(const std::filesystem::path& path) { return DocumentReader(path); }

inline std::string document_to_json_line(const Document& doc) {
  nlohmann::ordered_json j;
  j["id"] = doc.id;
  j["text"] = doc.text;
  if (!doc.meta.empty()) {
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (const auto& [k, v] : doc.meta) meta[k] = v;
    j["meta"] = std::move(meta);
  }
  try {
    return j.dump();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("document \"" + doc.id + "\": " + e.what());
  }
}

// Incremental JSONL writer; rejects duplicate ids.
class DocumentWriter {
 public:
  explicit DocumentWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }

  void write(const Document& doc) {
    if (doc.id.empty()) throw DataError("document with empty id");
    if (!ids_.insert(doc.id).second) throw DataError("duplicate document id \"" + doc.id + "\"");
    out_ << document_to_json_line(doc) << '\n';
    if (!out_) throw IoError("write failure on " + path_.string());
    ++count_;
  }

  std::uint64_t close() {
    out_.flush();
    if (!out_) throw IoError("write failure on " + path_.string());
    out_.close();
    return count_;
  }

  std::uint64_t count() const noexcept { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::unordered_set<std::string> ids_;
  std::uint64_t count_ = 0;
};

template <SourceOf<Document> S>
std::uint64_t write_documents(S& docs, const std::filesystem::path& path) {
  DocumentWriter writer(path);
  while (auto doc = docs.next()) writer.write(*doc);
  return writer.close();
}

template <SourceOf<Document> S>
std::uint64_t write_documents(S&& docs, const std::filesystem::path& path) {
  return write_documents(docs, path);
}

// Chars are Unicode code points; a line counts if non-empty after trimming.
inline void accumulate_stats(CorpusStats& stats, const Document& doc) {
  ++stats.doc_count;
  stats.total_chars += utf8::length(doc.text);
  stats.total_nonempty_lines += text::nonempty_lines(doc.text).size();
}

inline void finalize_stats(CorpusStats& stats) {
  stats.mean_doc_chars =
      stats.doc_count == 0 ? 0.0 : static_cast<double>(stats.total_chars) / static_cast<double>(stats.doc_count);
}

template <SourceOf<Document> S>
CorpusStats corpus_stats(S& docs) {
  CorpusStats stats;
  while (auto doc = docs.next()) accumulate_stats(stats, *doc);
  finalize_stats(stats);
  return stats;
}

template <SourceOf<Document> S>
CorpusStats corpus_stats(S&& docs) {
  return corpus_stats(docs);
}

}  // namespace edpack
