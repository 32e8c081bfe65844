#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edpack/error.hpp"
#include "edpack/text.hpp"

namespace edpack::analysis {

// ---------------------------------------------------------------------------
// Memory and throughput model
// ---------------------------------------------------------------------------

// Bytes per parameter under mixed precision: bf16 weights and gradients, fp32
// master weights plus two Adam moments.
struct DtypeBytes {
  double param = 2;
  double grad = 2;
  double optim_master = 4;
  double optim_m1 = 4;
  double optim_m2 = 4;

  double optimizer() const noexcept { return optim_master + optim_m1 + optim_m2; }
  double total() const noexcept { return param + grad + optimizer(); }
};

struct TrainRunSpec {
  std::string label;
  double params = 0;
  std::uint32_t world_size = 1;
  DtypeBytes dtype;
  bool offload_params = false;
  bool offload_optimizer = false;
  double tokens = 0;
  double wall_hours = 0;

  void validate() const {
    if (params < 1) throw DataError("run " + label + ": params must be >= 1");
    if (world_size < 1) throw DataError("run " + label + ": world_size must be >= 1");
  }
};

// Model-state memory with fully partitioned (stage 3) parameters, gradients
// and optimizer states. Activations and temporary buffers are not modeled.
struct MemoryEstimate {
  double param_bytes_per_gpu = 0;
  double grad_bytes_per_gpu = 0;
  double optimizer_bytes_per_gpu = 0;
  double gpu_bytes = 0;
  double host_bytes_per_rank = 0;
  // All ranks' offloaded shares; they share one host on a single node.
  double host_bytes_total = 0;
};

inline MemoryEstimate estimate_memory(const TrainRunSpec& run) {
  run.validate();
  const double w = run.world_size;
  MemoryEstimate m;
  m.param_bytes_per_gpu = run.params * run.dtype.param / w;
  m.grad_bytes_per_gpu = run.params * run.dtype.grad / w;
  m.optimizer_bytes_per_gpu = run.params * run.dtype.optimizer() / w;
  m.gpu_bytes = m.param_bytes_per_gpu + m.grad_bytes_per_gpu + m.optimizer_bytes_per_gpu;
  if (run.offload_params) {
    m.gpu_bytes -= m.param_bytes_per_gpu;
    m.host_bytes_per_rank += m.param_bytes_per_gpu;
  }
  if (run.offload_optimizer) {
    m.gpu_bytes -= m.optimizer_bytes_per_gpu;
    m.host_bytes_per_rank += m.optimizer_bytes_per_gpu;
  }
  m.host_bytes_total = m.host_bytes_per_rank * w;
  return m;
}

struct ScalingResult {
  double base_tokens_per_gpu_hour = 0;
  double scaled_tokens_per_gpu_hour = 0;
  double efficiency = 0;
};

inline double tokens_per_gpu_hour(const TrainRunSpec& run) {
  if (!(run.wall_hours > 0)) throw DataError("run " + run.label + ": wall_hours must be > 0");
  if (run.world_size < 1) throw DataError("run " + run.label + ": world_size must be >= 1");
  return run.tokens / (run.world_size * run.wall_hours);
}

inline ScalingResult scaling_efficiency(const TrainRunSpec& base, const TrainRunSpec& scaled) {
  ScalingResult r;
  r.base_tokens_per_gpu_hour = tokens_per_gpu_hour(base);
  r.scaled_tokens_per_gpu_hour = tokens_per_gpu_hour(scaled);
  if (!(r.base_tokens_per_gpu_hour > 0)) throw DataError("base run has zero throughput");
  r.efficiency = r.scaled_tokens_per_gpu_hour / r.base_tokens_per_gpu_hour;
  return r;
}

inline double tokens_per_parameter(double tokens, double params) {
  if (!(params > 0)) throw DataError("params must be > 0");
  return tokens / params;
}

// ---------------------------------------------------------------------------
// Learning-rate schedule: linear warmup to peak, cosine decay to floor.
// ---------------------------------------------------------------------------

struct LrSchedule {
  double peak_lr = 1e-4;
  double warmup_fraction = 0.10;
  std::uint64_t total_steps = 0;
  double floor_lr = 0.0;

  void validate() const {
    if (!(warmup_fraction > 0 && warmup_fraction < 1)) throw ConfigError("warmup_fraction must be in (0, 1)");
    if (!(peak_lr > floor_lr && floor_lr >= 0)) throw ConfigError("need peak_lr > floor_lr >= 0");
  }

  std::uint64_t warmup_steps() const noexcept {
    return static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  }
};

inline double lr_at(std::uint64_t step, const LrSchedule& s) {
  s.validate();
  if (step > s.total_steps) {
    throw DataError("step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
  }
  const std::uint64_t warm = s.warmup_steps();
  if (warm > 0 && step <= warm) {
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  }
  const std::uint64_t decay = s.total_steps - warm;
  if (decay == 0) return s.peak_lr;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(decay);
  return s.floor_lr + (s.peak_lr - s.floor_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// Benchmark tables
// ---------------------------------------------------------------------------

struct BenchmarkRow {
  std::string label;
  std::uint64_t tokens = 0;
  std::map<std::string, double> scores;
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;
  // Column order as first seen in the input.
  std::vector<std::string> benchmarks;
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  std::string base;

  const BenchmarkRow& row(const std::string& label) const {
    for (const auto& r : rows) {
      if (r.label == label) return r;
    }
    throw DataError("no benchmark row labeled \"" + label + "\"");
  }

  const BenchmarkRow& base_row() const { return row(base); }

  void validate() const {
    if (rows.empty()) throw DataError("benchmark table has no rows");
    for (const auto& r : rows) {
      if (r.scores.size() != benchmarks.size()) throw DataError("row " + r.label + " has a different benchmark set");
      for (const auto& b : benchmarks) {
        const auto it = r.scores.find(b);
        if (it == r.scores.end()) throw DataError("row " + r.label + " lacks benchmark " + b);
        if (!(it->second >= 0.0 && it->second <= 1.0)) {
          throw DataError("row " + r.label + ": score for " + b + " outside [0, 1]");
        }
      }
    }
    (void)base_row();
    for (const auto& [name, members] : groups) {
      if (members.empty()) throw DataError("group " + name + " is empty");
      for (const auto& m : members) {
        if (!rows.front().scores.contains(m)) throw DataError("group " + name + " names unknown benchmark " + m);
      }
    }
  }
};

inline std::vector<std::pair<std::string, std::vector<std::string>>> default_groups() {
  return {{"educational", {"MMLU", "ARC-Challenge", "ARC-Easy", "HellaSwag"}},
          {"general", {"Winogrande", "BoolQ", "PIQA"}}};
}

// {"rows": {label: {"tokens": n, "scores": {name: x}}}, "groups": {...}, "base": label}
inline BenchmarkTable benchmark_table_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw DataError("benchmark table must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k != "rows" && k != "groups" && k != "base") throw DataError("benchmark table: unknown key \"" + k + "\"");
  }
  if (!j.contains("rows") || !j["rows"].is_object()) throw DataError("benchmark table: \"rows\" object required");
  if (!j.contains("base") || !j["base"].is_string()) throw DataError("benchmark table: \"base\" label required");
  BenchmarkTable t;
  t.base = j["base"].get<std::string>();
  try {
    for (const auto& [label, row] : j["rows"].items()) {
      BenchmarkRow r;
      r.label = label;
      r.tokens = row.at("tokens").get<std::uint64_t>();
      for (const auto& [name, score] : row.at("scores").items()) {
        if (!score.is_number()) throw DataError("row " + label + ": score for " + name + " is not a number");
        r.scores[name] = score.get<double>();
        if (t.rows.empty()) t.benchmarks.push_back(name);
      }
      t.rows.push_back(std::move(r));
    }
    if (j.contains("groups")) {
      for (const auto& [name, members] : j["groups"].items()) {
        t.groups.emplace_back(name, members.get<std::vector<std::string>>());
      }
    } else {
      t.groups = default_groups();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("benchmark table: ") + e.what());
  }
  t.validate();
  return t;
}

inline BenchmarkTable load_benchmark_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return benchmark_table_from_json(j);
}

inline double table_average(std::span<const double> scores) {
  if (scores.empty()) throw DataError("cannot average an empty score set");
  double sum = 0;
  for (const double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

inline double table_average(const BenchmarkRow& row) {
  std::vector<double> v;
  v.reserve(row.scores.size());
  for (const auto& [name, s] : row.scores) v.push_back(s);
  return table_average(v);
}

// Percent change from base to value.
inline double relative_delta(double base, double value) {
  if (base == 0.0) throw DataError("relative delta against a zero base");
  return 100.0 * (value - base) / base;
}

enum class GroupMethod { RatioOfMeans, MeanOfRatios };

inline const char* to_string(GroupMethod m) noexcept {
  return m == GroupMethod::RatioOfMeans ? "ratio_of_means" : "mean_of_ratios";
}

inline double group_delta(const BenchmarkTable& t, const BenchmarkRow& row, const std::vector<std::string>& members,
                          GroupMethod method) {
  const auto& base = t.base_row();
  if (members.empty()) throw DataError("empty benchmark group");
  auto score = [](const BenchmarkRow& r, const std::string& name) {
    const auto it = r.scores.find(name);
    if (it == r.scores.end()) throw DataError("unknown benchmark " + name + " in group");
    return it->second;
  };
  const double n = static_cast<double>(members.size());
  if (method == GroupMethod::RatioOfMeans) {
    double base_sum = 0;
    double row_sum = 0;
    for (const auto& m : members) {
      base_sum += score(base, m);
      row_sum += score(row, m);
    }
    return relative_delta(base_sum / n, row_sum / n);
  }
  double acc = 0;
  for (const auto& m : members) acc += relative_delta(score(base, m), score(row, m));
  return acc / n;
}

struct GroupDeltaRow {
  std::string label;
  std::uint64_t tokens = 0;
  std::vector<std::pair<std::string, double>> deltas;  // group name -> percent
};

inline std::vector<GroupDeltaRow> group_deltas(const BenchmarkTable& t, GroupMethod method) {
  if (t.groups.empty()) throw DataError("benchmark table defines no groups");
  std::vector<GroupDeltaRow> out;
  for (const auto& row : t.rows) {
    GroupDeltaRow g{row.label, row.tokens, {}};
    for (const auto& [name, members] : t.groups) g.deltas.emplace_back(name, group_delta(t, row, members, method));
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss curves
// ---------------------------------------------------------------------------

struct LossPoint {
  std::uint64_t step = 0;
  double loss = 0;
};

struct LossCurve {
  std::string label;
  std::vector<LossPoint> points;

  void validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!(points[i].loss > 0)) throw DataError("curve " + label + ": loss must be > 0");
      if (i > 0 && points[i].step <= points[i - 1].step) {
        throw DataError("curve " + label + ": steps must be strictly increasing");
      }
    }
  }
};

// CSV with columns step,loss; an optional non-numeric header line is skipped.
inline LossCurve load_loss_curve(const std::filesystem::path& path, std::string label = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LossCurve c;
  c.label = label.empty() ? path.stem().string() : std::move(label);
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    const auto comma = trimmed.find(',');
    if (comma == std::string_view::npos) throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected step,loss");
    const std::string step_s(text::trim(trimmed.substr(0, comma)));
    const std::string loss_s(text::trim(trimmed.substr(comma + 1)));
    try {
      std::size_t used_step = 0;
      std::size_t used_loss = 0;
      const auto step = std::stoull(step_s, &used_step);
      const auto loss = std::stod(loss_s, &used_loss);
      if (used_step != step_s.size() || used_loss != loss_s.size()) throw std::invalid_argument("junk");
      c.points.push_back({step, loss});
    } catch (const std::logic_error&) {
      if (line_no == 1 && c.points.empty()) continue;
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": not a step,loss pair");
    }
  }
  c.validate();
  return c;
}

struct LossGap {
  std::string higher_label;
  std::string lower_label;
  double final_higher = 0;
  double final_lower = 0;
  double relative_gap_percent = 0;
};

// Gap between final losses, relative to the higher of the two.
inline LossGap loss_gap(const LossCurve& a, const LossCurve& b) {
  if (a.points.empty() || b.points.empty()) throw DataError("loss_gap needs two non-empty curves");
  const double fa = a.points.back().loss;
  const double fb = b.points.back().loss;
  const bool a_higher = fa >= fb;
  LossGap g;
  g.higher_label = a_higher ? a.label : b.label;
  g.lower_label = a_higher ? b.label : a.label;
  g.final_higher = a_higher ? fa : fb;
  g.final_lower = a_higher ? fb : fa;
  g.relative_gap_percent = 100.0 * (g.final_higher - g.final_lower) / g.final_higher;
  return g;
}

// ---------------------------------------------------------------------------
// Training run descriptions
// ---------------------------------------------------------------------------

// {"params": P, "runs": [{"label", "tokens", "world_size", "wall_hours",
//   "offload_params", "offload_optimizer"}]}; run-level "params" overrides.
inline std::vector<TrainRunSpec> runs_from_json(const nlohmann::json& j) {
  std::vector<TrainRunSpec> out;
  try {
    const double default_params = j.value("params", 0.0);
    for (const auto& r : j.at("runs")) {
      TrainRunSpec s;
      s.label = r.at("label").get<std::string>();
      s.params = r.value("params", default_params);
      s.world_size = r.at("world_size").get<std::uint32_t>();
      s.tokens = r.value("tokens", 0.0);
      s.wall_hours = r.value("wall_hours", 0.0);
      s.offload_params = r.value("offload_params", false);
      s.offload_optimizer = r.value("offload_optimizer", false);
      s.validate();
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("runs: ") + e.what());
  }
  return out;
}

inline std::vector<TrainRunSpec> load_runs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return runs_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace edpack::analysis
