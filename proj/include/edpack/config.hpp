#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "edpack/error.hpp"
#include "edpack/filter.hpp"
#include "edpack/pack.hpp"
#include "edpack/shard.hpp"

namespace edpack {

struct DedupConfig {
  std::optional<std::filesystem::path> sidecar;
  std::uint64_t memory_budget = UINT64_MAX;
};

struct AnalysisInputs {
  std::optional<std::filesystem::path> table;
  std::vector<std::filesystem::path> curves;
  std::optional<std::filesystem::path> runs;
  std::optional<double> params;
  bool svg = false;
};

struct PipelineConfig {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  unsigned workers = 1;
  FilterConfig filter;
  DedupConfig dedup;
  PackConfig pack;
  ShardWriteConfig shard;
  StreamConfig stream;
  AnalysisInputs analysis;

  void validate() const {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    filter.validate();
    pack.validate();
    shard.validate();
    stream.validate();
  }
};

inline Codec parse_codec(std::string_view s) {
  if (s == "none" || s == "0") return Codec::None;
  if (s == "deflate" || s == "1") return Codec::Deflate;
  throw ConfigError("unknown codec \"" + std::string(s) + "\" (expected none or deflate)");
}

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown config key \"" + std::string(where) + "." + k + "\"");
  }
}

template <class T>
void read_key(const nlohmann::json& obj, const char* key, T& dst, std::string_view where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      const auto v = it->template get<std::uint64_t>();
      if (v > std::numeric_limits<T>::max()) throw ConfigError("value out of range");
      dst = static_cast<T>(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("expected a boolean");
      dst = it->template get<bool>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError("expected a number");
      dst = it->template get<T>();
    } else {
      dst = it->template get<T>();
    }
  } catch (const std::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

inline void read_path(const nlohmann::json& obj, const char* key, std::optional<std::filesystem::path>& dst,
                      std::string_view where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_string()) throw ConfigError(std::string(where) + "." + key + ": expected a path string");
  dst = it->get<std::string>();
}

inline std::vector<std::filesystem::path> read_paths(const nlohmann::json& v, std::string_view where) {
  if (!v.is_array()) throw ConfigError(std::string(where) + ": expected an array of paths");
  std::vector<std::filesystem::path> out;
  for (const auto& p : v) {
    if (!p.is_string()) throw ConfigError(std::string(where) + ": expected an array of paths");
    out.emplace_back(p.get<std::string>());
  }
  return out;
}

}  // namespace detail

// Strict: unknown keys at any level are errors; missing keys keep defaults.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::read_key;
  PipelineConfig cfg;
  detail::reject_unknown(j, "config",
                         {"inputs", "output_dir", "seed", "workers", "filter", "dedup", "pack", "shard", "stream", "analysis"});
  if (j.contains("inputs")) cfg.inputs = detail::read_paths(j["inputs"], "inputs");
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("output_dir: expected a path string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  read_key(j, "seed", cfg.seed, "config");
  read_key(j, "workers", cfg.workers, "config");
  cfg.stream.seed = cfg.seed;

  if (const auto it = j.find("filter"); it != j.end()) {
    const auto& f = *it;
    detail::reject_unknown(f, "filter",
                           {"min_nonempty_lines", "short_line_char_limit", "max_short_line_fraction", "min_mean_line_chars",
                            "max_duplicate_line_ratio", "ngram_order", "max_top_ngram_coverage"});
    read_key(f, "min_nonempty_lines", cfg.filter.min_nonempty_lines, "filter");
    read_key(f, "short_line_char_limit", cfg.filter.short_line_char_limit, "filter");
    read_key(f, "max_short_line_fraction", cfg.filter.max_short_line_fraction, "filter");
    read_key(f, "min_mean_line_chars", cfg.filter.min_mean_line_chars, "filter");
    read_key(f, "max_duplicate_line_ratio", cfg.filter.max_duplicate_line_ratio, "filter");
    read_key(f, "ngram_order", cfg.filter.ngram_order, "filter");
    read_key(f, "max_top_ngram_coverage", cfg.filter.max_top_ngram_coverage, "filter");
  }
  if (const auto it = j.find("dedup"); it != j.end()) {
    detail::reject_unknown(*it, "dedup", {"sidecar", "memory_budget"});
    detail::read_path(*it, "sidecar", cfg.dedup.sidecar, "dedup");
    read_key(*it, "memory_budget", cfg.dedup.memory_budget, "dedup");
  }
  if (const auto it = j.find("pack"); it != j.end()) {
    detail::reject_unknown(*it, "pack", {"seq_len", "insert_doc_sep", "sep_id"});
    read_key(*it, "seq_len", cfg.pack.seq_len, "pack");
    read_key(*it, "insert_doc_sep", cfg.pack.insert_doc_sep, "pack");
    read_key(*it, "sep_id", cfg.pack.sep_id, "pack");
  }
  if (const auto it = j.find("shard"); it != j.end()) {
    const auto& s = *it;
    detail::reject_unknown(s, "shard", {"max_seqs_per_shard", "frame_size", "codec", "token_width", "write_empty"});
    read_key(s, "max_seqs_per_shard", cfg.shard.max_seqs_per_shard, "shard");
    read_key(s, "frame_size", cfg.shard.frame_size, "shard");
    read_key(s, "token_width", cfg.shard.token_width, "shard");
    read_key(s, "write_empty", cfg.shard.write_empty, "shard");
    if (const auto c = s.find("codec"); c != s.end()) {
      if (c->is_string()) {
        cfg.shard.codec = parse_codec(c->get<std::string>());
      } else if (c->is_number_unsigned()) {
        cfg.shard.codec = parse_codec(std::to_string(c->get<std::uint64_t>()));
      } else {
        throw ConfigError("shard.codec: expected \"none\" or \"deflate\"");
      }
    }
  }
  if (const auto it = j.find("stream"); it != j.end()) {
    detail::reject_unknown(*it, "stream", {"rank", "world_size", "shuffle_buffer", "seed"});
    read_key(*it, "rank", cfg.stream.rank, "stream");
    read_key(*it, "world_size", cfg.stream.world_size, "stream");
    read_key(*it, "shuffle_buffer", cfg.stream.shuffle_buffer, "stream");
    read_key(*it, "seed", cfg.stream.seed, "stream");
  }
  if (const auto it = j.find("analysis"); it != j.end()) {
    const auto& a = *it;
    detail::reject_unknown(a, "analysis", {"table", "curves", "runs", "params", "svg"});
    detail::read_path(a, "table", cfg.analysis.table, "analysis");
    detail::read_path(a, "runs", cfg.analysis.runs, "analysis");
    if (a.contains("curves")) cfg.analysis.curves = detail::read_paths(a["curves"], "analysis.curves");
    if (a.contains("params")) {
      double p = 0;
      read_key(a, "params", p, "analysis");
      cfg.analysis.params = p;
    }
    read_key(a, "svg", cfg.analysis.svg, "analysis");
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  auto cfg = config_from_json(j);
  // Relative paths in a config file are resolved against the file's directory.
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (p.is_relative()) p = base / p;
  };
  for (auto& p : cfg.inputs) resolve(p);
  resolve(cfg.output_dir);
  if (cfg.dedup.sidecar) resolve(*cfg.dedup.sidecar);
  if (cfg.analysis.table) resolve(*cfg.analysis.table);
  if (cfg.analysis.runs) resolve(*cfg.analysis.runs);
  for (auto& p : cfg.analysis.curves) resolve(p);
  return cfg;
}

}  // namespace edpack
