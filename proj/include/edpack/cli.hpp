#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage/config error,
// 2 data error, 3 I/O error. Logs and summaries go to `err`, data to `out`.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edpack/analysis.hpp"
#include "edpack/config.hpp"
#include "edpack/corpus.hpp"
#include "edpack/error.hpp"
#include "edpack/pipeline.hpp"
#include "edpack/report.hpp"
#include "edpack/shard.hpp"
#include "edpack/tokenize.hpp"

namespace edpack::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kIo = 3 };

namespace detail {

// Options bound to temporaries; applied on top of the config file after parsing
// so that flags always win.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, T* field, const std::string& desc) {
    auto tmp = std::make_shared<T>();
    auto* opt = app->add_option(name, *tmp, desc);
    apply_.push_back([opt, tmp, field] {
      if (opt->count() > 0) *field = *tmp;
    });
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& name, bool* field, bool value, const std::string& desc) {
    auto* opt = app->add_flag(name, desc);
    apply_.push_back([opt, field, value] {
      if (opt->count() > 0) *field = value;
    });
    return opt;
  }

  void add_action(std::function<void()> fn) { apply_.push_back(std::move(fn)); }

  void apply() const {
    for (const auto& fn : apply_) fn();
  }

 private:
  std::vector<std::function<void()>> apply_;
};

inline void clear_shards(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return;
  for (const auto& p : list_shards(dir)) std::filesystem::remove(p, ec);
}

inline void log_summary(std::ostream& err, const std::string& stage, const nlohmann::ordered_json& j) {
  err << "[edpack] " << stage << " summary " << j.dump() << "\n";
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Corpus preparation and continued-pretraining analysis toolkit", "edpack"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  PipelineConfig cfg;
  std::string config_path;
  detail::Overrides ov;
  app.add_option("--config", config_path, "JSON config file; flags override its values");
  ov.add(&app, "--workers", &cfg.workers, "Worker threads for filtering and tokenization");
  auto* global_seed_opt = ov.add(&app, "--seed", &cfg.seed, "Global seed (default shuffle seed for stream)");

  std::vector<std::string> inputs;
  std::string output;
  std::string input;

  auto add_filter_flags = [&](CLI::App* sub) {
    ov.add(sub, "--min-nonempty-lines", &cfg.filter.min_nonempty_lines, "Reject documents with fewer non-empty lines");
    ov.add(sub, "--short-line-char-limit", &cfg.filter.short_line_char_limit, "Lines shorter than this are short");
    ov.add(sub, "--max-short-line-fraction", &cfg.filter.max_short_line_fraction, "Max fraction of short lines");
    ov.add(sub, "--min-mean-line-chars", &cfg.filter.min_mean_line_chars, "Min mean non-empty line length");
    ov.add(sub, "--max-duplicate-line-ratio", &cfg.filter.max_duplicate_line_ratio, "Max duplicate-line ratio");
    ov.add(sub, "--ngram-order", &cfg.filter.ngram_order, "Word n-gram order for the repetition check");
    ov.add(sub, "--max-top-ngram-coverage", &cfg.filter.max_top_ngram_coverage, "Max top n-gram coverage");
  };
  auto add_pack_flags = [&](CLI::App* sub) {
    ov.add(sub, "--seq-len", &cfg.pack.seq_len, "Tokens per packed sequence");
    ov.add_flag(sub, "--no-doc-sep", &cfg.pack.insert_doc_sep, false, "Do not insert a separator after each document");
    ov.add(sub, "--sep-id", &cfg.pack.sep_id, "Separator token id");
  };
  std::string codec_flag;
  auto add_shard_flags = [&](CLI::App* sub) {
    ov.add(sub, "--max-seqs-per-shard", &cfg.shard.max_seqs_per_shard, "Sequences per shard file");
    ov.add(sub, "--frame-size", &cfg.shard.frame_size, "Sequences per compressed frame");
    ov.add(sub, "--token-width", &cfg.shard.token_width, "Bytes per stored token (2 or 4)");
    ov.add_flag(sub, "--write-empty", &cfg.shard.write_empty, true, "Write one empty shard when there is no data");
    auto* c = sub->add_option("--codec", codec_flag, "Frame codec: none or deflate");
    ov.add_action([c, &codec_flag, &cfg] {
      if (c->count() > 0) cfg.shard.codec = parse_codec(codec_flag);
    });
  };
  std::string out_dir_flag;
  auto add_out_dir = [&](CLI::App* sub, const char* desc) {
    auto* o = sub->add_option("--output-dir,-o", out_dir_flag, desc);
    ov.add_action([o, &out_dir_flag, &cfg] {
      if (o->count() > 0) cfg.output_dir = out_dir_flag;
    });
  };

  auto* filter = app.add_subcommand("filter", "Apply the length and repetition filters to JSONL documents");
  filter->add_option("inputs", inputs, "Input JSONL files")->required();
  filter->add_option("--output,-o", output, "Kept documents (JSONL)")->required();
  std::string report_path;
  filter->add_option("--report", report_path, "Also write the per-reason report JSON here");
  add_filter_flags(filter);

  auto* dedup = app.add_subcommand("dedup", "Exact document-level deduplication (keep first)");
  dedup->add_option("inputs", inputs, "Input JSONL files")->required();
  dedup->add_option("--output,-o", output, "Unique documents (JSONL)")->required();
  std::string sidecar_flag;
  auto* sidecar_opt = dedup->add_option("--sidecar", sidecar_flag, "Write dropped/kept id pairs (JSONL)");
  ov.add_action([sidecar_opt, &sidecar_flag, &cfg] {
    if (sidecar_opt->count() > 0) cfg.dedup.sidecar = sidecar_flag;
  });
  ov.add(dedup, "--memory-budget", &cfg.dedup.memory_budget, "Bytes of canonical text kept in memory before spilling");

  auto* tokenize = app.add_subcommand("tokenize", "Byte-level tokenization into a token stream file");
  tokenize->add_option("inputs", inputs, "Input JSONL files")->required();
  tokenize->add_option("--output,-o", output, "Token stream file")->required();

  auto* pack = app.add_subcommand("pack", "Pack a token stream into fixed-length sequences");
  pack->add_option("input", input, "Token stream file")->required();
  pack->add_option("--output,-o", output, "Packed sequence file")->required();
  add_pack_flags(pack);

  auto* shard = app.add_subcommand("shard", "Write packed sequences into EDSH shards");
  shard->add_option("input", input, "Packed sequence file")->required();
  add_out_dir(shard, "Shard directory");
  add_shard_flags(shard);

  auto* pack_shards = app.add_subcommand("pack-shards", "Pack a token stream straight into EDSH shards");
  pack_shards->add_option("input", input, "Token stream file")->required();
  add_out_dir(pack_shards, "Shard directory");
  add_pack_flags(pack_shards);
  add_shard_flags(pack_shards);

  auto* stream = app.add_subcommand("stream", "Stream one rank's sequences from EDSH shards");
  stream->add_option("shards", inputs, "Shard files in global order");
  std::string shard_dir_flag;
  stream->add_option("--dir", shard_dir_flag, "Read every .edsh file in this directory, sorted by name");
  ov.add(stream, "--rank", &cfg.stream.rank, "This worker's rank");
  ov.add(stream, "--world-size", &cfg.stream.world_size, "Number of workers");
  ov.add(stream, "--shuffle-buffer", &cfg.stream.shuffle_buffer, "Shuffle buffer size (0 = no shuffle)");
  std::uint64_t stream_seed = 0;
  auto* stream_seed_opt = stream->add_option("--seed", stream_seed, "Shuffle seed");

  auto* stats = app.add_subcommand("stats", "Corpus statistics for JSONL documents");
  stats->add_option("inputs", inputs, "Input JSONL files")->required();

  auto* report = app.add_subcommand("report", "Benchmark, efficiency, loss and run analysis report");
  std::string table_flag, runs_flag;
  std::vector<std::string> curve_flags;
  auto* table_opt = report->add_option("--table", table_flag, "Benchmark table JSON");
  auto* curve_opt = report->add_option("--curve", curve_flags, "Loss curve CSV (step,loss); repeatable");
  auto* runs_opt = report->add_option("--runs", runs_flag, "Training runs JSON");
  double params_flag = 0;
  auto* params_opt = report->add_option("--params", params_flag, "Model parameter count");
  ov.add_flag(report, "--svg", &cfg.analysis.svg, true, "Also write SVG charts");
  add_out_dir(report, "Report directory");
  ov.add_action([&] {
    if (table_opt->count() > 0) cfg.analysis.table = table_flag;
    if (runs_opt->count() > 0) cfg.analysis.runs = runs_flag;
    if (curve_opt->count() > 0) cfg.analysis.curves.assign(curve_flags.begin(), curve_flags.end());
    if (params_opt->count() > 0) cfg.analysis.params = params_flag;
  });

  auto* estimate = app.add_subcommand("estimate", "Model-state memory, throughput and LR schedule estimates");
  analysis::TrainRunSpec run;
  run.label = "run";
  estimate->add_option("--params", run.params, "Parameter count")->required();
  estimate->add_option("--world-size", run.world_size, "GPUs (partition count)");
  estimate->add_flag("--offload-params", run.offload_params, "Offload parameters to host memory");
  estimate->add_flag("--offload-optimizer", run.offload_optimizer, "Offload optimizer states to host memory");
  estimate->add_option("--tokens", run.tokens, "Training tokens");
  estimate->add_option("--hours", run.wall_hours, "Wall-clock hours");
  analysis::LrSchedule sched;
  std::vector<std::uint64_t> lr_steps;
  estimate->add_option("--total-steps", sched.total_steps, "Optimizer steps for the LR schedule");
  estimate->add_option("--peak-lr", sched.peak_lr, "Peak learning rate");
  estimate->add_option("--warmup-fraction", sched.warmup_fraction, "Warmup fraction of total steps");
  estimate->add_option("--floor-lr", sched.floor_lr, "Final learning rate");
  estimate->add_option("--lr-step", lr_steps, "Report the learning rate at these steps; repeatable");

  auto* pipeline = app.add_subcommand("pipeline", "filter -> dedup -> tokenize -> pack -> shard");
  pipeline->add_option("inputs", inputs, "Input JSONL files (override config inputs)");
  add_out_dir(pipeline, "Output directory (shards go to <dir>/shards)");
  add_filter_flags(pipeline);
  add_pack_flags(pipeline);
  add_shard_flags(pipeline);

  if (argc <= 1) {
    err << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  if (app.get_subcommands().empty()) {
    err << "error: a subcommand is required\n" << app.help();
    return kUsage;
  }
  auto* sub = app.get_subcommands().front();

  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    ov.apply();
    // Shuffle seed precedence: stream --seed, then global --seed, then the config file.
    if (stream_seed_opt->count() > 0) {
      cfg.stream.seed = stream_seed;
    } else if (global_seed_opt->count() > 0) {
      cfg.stream.seed = cfg.seed;
    }
    cfg.validate();

    const std::vector<std::filesystem::path> in_paths(inputs.begin(), inputs.end());
    ByteTokenizer tokenizer;

    if (sub == filter) {
      const auto r = stage_filter(in_paths, output, cfg.filter, cfg.workers);
      const auto j = r.to_json();
      out << j.dump() << "\n";
      if (!report_path.empty()) {
        std::ofstream rf(report_path);
        rf << j.dump(2) << "\n";
        if (!rf) throw IoError("cannot write " + report_path);
      }
      detail::log_summary(err, "filter", j);
    } else if (sub == dedup) {
      const auto r = stage_dedup(in_paths, output, cfg.dedup, cfg.workers);
      detail::log_summary(err, "dedup", {{"kept", r.kept}, {"dropped", r.dropped}});
    } else if (sub == tokenize) {
      const auto r = stage_tokenize(in_paths, output, tokenizer, cfg.workers);
      detail::log_summary(err, "tokenize", {{"docs", r.docs}, {"tokens", r.tokens}});
    } else if (sub == pack) {
      const auto r = stage_pack(input, output, cfg.pack);
      detail::log_summary(err, "pack",
                          {{"sequences", r.sequences}, {"dropped_tail", r.dropped_tail}, {"flat_length", r.flat_length}});
    } else if (sub == shard) {
      detail::clear_shards(cfg.output_dir);
      const auto paths = stage_shard(input, cfg.output_dir, cfg.shard);
      for (const auto& p : paths) out << p.string() << "\n";
      detail::log_summary(err, "shard", {{"files", paths.size()}});
    } else if (sub == pack_shards) {
      detail::clear_shards(cfg.output_dir);
      TokenFileReader reader(input);
      ShardWriter writer(cfg.output_dir, cfg.shard);
      const auto r = pack_stream(reader, cfg.pack, [&](PackedSequence&& s) { writer.write(s); });
      const auto paths = writer.close();
      for (const auto& p : paths) out << p.string() << "\n";
      detail::log_summary(err, "pack-shards",
                          {{"sequences", r.sequences}, {"dropped_tail", r.dropped_tail}, {"files", paths.size()}});
    } else if (sub == stream) {
      std::vector<std::filesystem::path> shard_paths = in_paths;
      if (!shard_dir_flag.empty()) {
        const auto listed = list_shards(shard_dir_flag);
        shard_paths.insert(shard_paths.end(), listed.begin(), listed.end());
      }
      if (shard_paths.empty()) throw ConfigError("stream needs shard files or --dir");
      auto s = stream_read(shard_paths, cfg.stream);
      std::uint64_t n = 0;
      std::string line;
      while (auto seq = s.next()) {
        line = std::to_string(seq->ordinal);
        line.push_back('\t');
        for (std::size_t i = 0; i < seq->tokens.size(); ++i) {
          if (i) line.push_back(' ');
          line += std::to_string(seq->tokens[i]);
        }
        out << line << '\n';
        ++n;
      }
      detail::log_summary(err, "stream",
                          {{"rank", cfg.stream.rank},
                           {"world_size", cfg.stream.world_size},
                           {"sequences", n},
                           {"frames", s.shards().frames_decoded()}});
    } else if (sub == stats) {
      MultiDocumentReader reader(in_paths);
      const auto st = corpus_stats(reader);
      nlohmann::ordered_json j;
      j["doc_count"] = st.doc_count;
      j["total_chars"] = st.total_chars;
      j["total_nonempty_lines"] = st.total_nonempty_lines;
      j["mean_doc_chars"] = st.mean_doc_chars;
      out << j.dump() << "\n";
    } else if (sub == report) {
      if (!cfg.analysis.table) throw ConfigError("report needs --table (or analysis.table in the config)");
      const auto table = analysis::load_benchmark_table(*cfg.analysis.table);
      std::vector<analysis::LossCurve> curves;
      for (const auto& c : cfg.analysis.curves) curves.push_back(analysis::load_loss_curve(c));
      std::vector<analysis::TrainRunSpec> runs;
      if (cfg.analysis.runs) runs = analysis::load_runs(*cfg.analysis.runs);
      analysis::ReportOptions ro;
      ro.svg = cfg.analysis.svg;
      ro.params = cfg.analysis.params;
      const auto files = analysis::emit_report(table, curves, runs, cfg.output_dir, ro);
      for (const auto& f : files) out << f.string() << "\n";
    } else if (sub == estimate) {
      const auto mem = analysis::estimate_memory(run);
      nlohmann::ordered_json j;
      j["params"] = run.params;
      j["world_size"] = run.world_size;
      j["gpu_model_state_bytes"] = mem.gpu_bytes;
      j["host_offload_bytes_per_rank"] = mem.host_bytes_per_rank;
      j["host_offload_bytes_total"] = mem.host_bytes_total;
      j["activations"] = "excluded";
      if (run.tokens > 0) j["tokens_per_parameter"] = analysis::tokens_per_parameter(run.tokens, run.params);
      if (run.wall_hours > 0) j["tokens_per_gpu_hour"] = analysis::tokens_per_gpu_hour(run);
      if (sched.total_steps > 0) {
        j["warmup_steps"] = sched.warmup_steps();
        nlohmann::ordered_json lrs = nlohmann::ordered_json::object();
        for (const auto step : lr_steps) lrs[std::to_string(step)] = analysis::lr_at(step, sched);
        j["lr"] = lrs;
      }
      out << j.dump() << "\n";
    } else if (sub == pipeline) {
      if (!in_paths.empty()) cfg.inputs = in_paths;
      detail::clear_shards(shard_dir(cfg));
      const auto sum = run_pipeline(cfg, tokenizer);
      detail::log_summary(err, "pipeline", sum.to_json());
      for (const auto& p : sum.shards) out << p.string() << "\n";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

}  // namespace edpack::cli
