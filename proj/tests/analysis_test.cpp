#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "edpack/analysis.hpp"
#include "test_util.hpp"

namespace edpack::analysis {
namespace {

const std::filesystem::path kData = EDPACK_DATA_DIR;

TrainRunSpec run(double params, std::uint32_t w, bool off_p = false, bool off_o = false) {
  TrainRunSpec s;
  s.label = "r";
  s.params = params;
  s.world_size = w;
  s.offload_params = off_p;
  s.offload_optimizer = off_o;
  return s;
}

TEST(Memory, SingleGpuNoOffload) {
  const auto m = estimate_memory(run(125e6, 1));
  EXPECT_DOUBLE_EQ(m.gpu_bytes, 2.0e9);
  EXPECT_DOUBLE_EQ(m.host_bytes_total, 0.0);
}

TEST(Memory, ThreeGpusNoOffload) {
  EXPECT_NEAR(estimate_memory(run(125e6, 3)).gpu_bytes, 6.667e8, 0.001e8);
}

TEST(Memory, ThreeGpusBothOffloads) {
  const auto m = estimate_memory(run(125e6, 3, true, true));
  // Spreadsheet arithmetic: gradients stay on GPU, 2 bytes * 125e6 / 3.
  EXPECT_NEAR(m.gpu_bytes, 8.333e7, 0.001e7);
  EXPECT_NEAR(m.host_bytes_total, 1.75e9, 1.0);
  EXPECT_NEAR(m.host_bytes_per_rank, 14 * 125e6 / 3, 1.0);
}

TEST(Memory, PartitionedTermsScaleInverselyWithWorldSize) {
  for (std::uint32_t k = 1; k <= 16; ++k) {
    const auto a = estimate_memory(run(350e6, k));
    const auto b = estimate_memory(run(350e6, 2 * k));
    EXPECT_NEAR(b.gpu_bytes * 2, a.gpu_bytes, 1e-3);
    EXPECT_NEAR(b.optimizer_bytes_per_gpu * 2, a.optimizer_bytes_per_gpu, 1e-3);
  }
}

TEST(Memory, RejectsInvalidRuns) {
  EXPECT_THROW(estimate_memory(run(0, 1)), DataError);
  EXPECT_THROW(estimate_memory(run(1e6, 0)), DataError);
}

TEST(Scaling, PublishedRuns) {
  auto base = run(125e6, 3);
  base.tokens = 400e6;
  base.wall_hours = 3;
  auto scaled = run(125e6, 6);
  scaled.tokens = 1e9;
  scaled.wall_hours = 4;
  const auto r = scaling_efficiency(base, scaled);
  EXPECT_NEAR(r.base_tokens_per_gpu_hour, 44.444e6, 0.001e6);
  EXPECT_NEAR(r.scaled_tokens_per_gpu_hour, 41.667e6, 0.001e6);
  EXPECT_DOUBLE_EQ(r.efficiency, 0.9375);
}

TEST(Scaling, IdenticalAndDoubledWallTime) {
  auto a = run(1e6, 2);
  a.tokens = 1e9;
  a.wall_hours = 5;
  EXPECT_DOUBLE_EQ(scaling_efficiency(a, a).efficiency, 1.0);
  auto b = a;
  b.wall_hours = 10;
  EXPECT_DOUBLE_EQ(scaling_efficiency(a, b).efficiency, 0.5);
  b.wall_hours = 0;
  EXPECT_THROW(scaling_efficiency(a, b), DataError);
}

TEST(TokensPerParameter, Values) {
  EXPECT_DOUBLE_EQ(tokens_per_parameter(400e6, 125e6), 3.2);
  EXPECT_DOUBLE_EQ(tokens_per_parameter(1e9, 125e6), 8.0);
  EXPECT_DOUBLE_EQ(tokens_per_parameter(0, 125e6), 0.0);
  EXPECT_THROW(tokens_per_parameter(1, 0), DataError);
}

LrSchedule sched(std::uint64_t total) {
  LrSchedule s;
  s.total_steps = total;
  return s;
}

TEST(LrSchedule, Examples) {
  const auto s = sched(1000);
  EXPECT_EQ(s.warmup_steps(), 100u);
  EXPECT_DOUBLE_EQ(lr_at(0, s), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(100, s), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(50, s), 0.5e-4);
  EXPECT_NEAR(lr_at(550, s), 0.5e-4, 1e-15);
  EXPECT_NEAR(lr_at(1000, s), 0.0, 1e-20);
  EXPECT_THROW(lr_at(1001, s), DataError);
}

TEST(LrSchedule, FloorIsReachedAndRespected) {
  auto s = sched(777);
  s.floor_lr = 1e-5;
  EXPECT_DOUBLE_EQ(lr_at(777, s), 1e-5);
  for (std::uint64_t step = s.warmup_steps(); step <= 777; ++step) EXPECT_GE(lr_at(step, s), 1e-5 - 1e-18);
}

TEST(LrSchedule, PropertiesOverManyTotals) {
  for (std::uint64_t total = 1; total <= 3000; total += 37) {
    const auto s = sched(total);
    const auto wm = s.warmup_steps();
    double prev = -1;
    for (std::uint64_t step = 0; step <= total; ++step) {
      const double lr = lr_at(step, s);
      EXPECT_GE(lr, 0.0);
      EXPECT_LE(lr, 1e-4 + 1e-18);
      if (step <= wm) {
        EXPECT_GE(lr, prev);  // warmup is non-decreasing
      } else {
        EXPECT_LE(lr, prev + 1e-18);  // decay is non-increasing
      }
      prev = lr;
    }
    if (wm > 0) EXPECT_DOUBLE_EQ(lr_at(wm, s), 1e-4);
    if (wm + 1 <= total && total - wm > 50) EXPECT_NEAR(lr_at(wm + 1, s), 1e-4, 1e-6);
    if (total > wm) EXPECT_NEAR(lr_at(total, s), 0.0, 1e-20);
  }
}

TEST(LrSchedule, InvalidSchedules) {
  auto s = sched(10);
  s.warmup_fraction = 0;
  EXPECT_THROW(lr_at(0, s), ConfigError);
  s = sched(10);
  s.floor_lr = 2e-4;
  EXPECT_THROW(lr_at(0, s), ConfigError);
}

TEST(Benchmarks, TableAveragesFromData) {
  const auto t = load_benchmark_table(kData / "table1.json");
  EXPECT_EQ(t.benchmarks.size(), 7u);
  EXPECT_EQ(t.base, "base");
  // Independent sums of the seven scores.
  EXPECT_NEAR(table_average(t.row("base")), 3.0486 / 7, 1e-12);
  EXPECT_NEAR(table_average(t.row("400M")), 3.0755 / 7, 1e-12);
  EXPECT_NEAR(table_average(t.row("1B")), 3.0838 / 7, 1e-12);
  const std::vector<double> same(7, 0.37);
  EXPECT_DOUBLE_EQ(table_average(same), 0.37);
  EXPECT_THROW(table_average(std::vector<double>{}), DataError);
}

TEST(Benchmarks, RelativeDelta) {
  EXPECT_NEAR(relative_delta(0.2304, 0.2490), 8.0729, 1e-4);
  EXPECT_NEAR(relative_delta(0.6034, 0.5719), -5.2204, 1e-4);
  EXPECT_DOUBLE_EQ(relative_delta(0.5, 0.5), 0.0);
  EXPECT_THROW(relative_delta(0.0, 0.5), DataError);
}

TEST(Benchmarks, GroupDeltas) {
  const auto t = load_benchmark_table(kData / "table1.json");
  const auto rom = group_deltas(t, GroupMethod::RatioOfMeans);
  ASSERT_EQ(rom.size(), 3u);
  // Educational means: base 1.2698/4, 400M 1.3319/4, 1B 1.3540/4.
  EXPECT_NEAR(rom[1].deltas[0].second, 100 * (1.3319 - 1.2698) / 1.2698, 1e-9);
  EXPECT_NEAR(rom[2].deltas[0].second, 100 * (1.3540 - 1.2698) / 1.2698, 1e-9);
  EXPECT_DOUBLE_EQ(rom[0].deltas[0].second, 0.0);

  const auto mor = group_deltas(t, GroupMethod::MeanOfRatios);
  const double expect_general_400m =
      (relative_delta(0.5241, 0.5114) + relative_delta(0.6034, 0.5804) + relative_delta(0.6513, 0.6518)) / 3;
  EXPECT_NEAR(mor[1].deltas[1].second, expect_general_400m, 1e-9);
}

TEST(Benchmarks, AllBenchmarkGroupAgainstItselfIsZero) {
  auto t = load_benchmark_table(kData / "table1.json");
  t.groups = {{"all", t.benchmarks}};
  for (auto m : {GroupMethod::RatioOfMeans, GroupMethod::MeanOfRatios}) {
    EXPECT_DOUBLE_EQ(group_delta(t, t.base_row(), t.benchmarks, m), 0.0);
  }
  t.groups = {{"bad", {"Nope"}}};
  EXPECT_THROW(group_deltas(t, GroupMethod::RatioOfMeans), DataError);
}

TEST(Benchmarks, JsonValidation) {
  using J = nlohmann::ordered_json;
  const J ok = J::parse(R"({"base":"a","rows":{"a":{"tokens":0,"scores":{"X":0.5}}},"groups":{"g":["X"]}})");
  EXPECT_NO_THROW(benchmark_table_from_json(ok));
  auto bad = ok;
  bad["extra"] = 1;
  EXPECT_THROW(benchmark_table_from_json(bad), DataError);
  bad = ok;
  bad["rows"]["a"]["scores"]["X"] = 1.5;
  EXPECT_THROW(benchmark_table_from_json(bad), DataError);
  bad = ok;
  bad["rows"]["b"] = J::parse(R"({"tokens":1,"scores":{"Y":0.5}})");
  EXPECT_THROW(benchmark_table_from_json(bad), DataError);
  bad = ok;
  bad["base"] = "zzz";
  EXPECT_THROW(benchmark_table_from_json(bad), DataError);
  bad = ok;
  bad.erase("groups");
  EXPECT_THROW(benchmark_table_from_json(bad), DataError);  // default groups name absent benchmarks

  std::ifstream in(kData / "table1.json");
  auto full = J::parse(in);
  full.erase("groups");
  EXPECT_EQ(benchmark_table_from_json(full).groups, default_groups());
}

TEST(LossCurves, GapExamples) {
  const auto a = load_loss_curve(kData / "loss_400m.csv", "400M");
  const auto b = load_loss_curve(kData / "loss_1b.csv", "1B");
  const auto g = loss_gap(b, a);
  EXPECT_EQ(g.higher_label, "400M");
  EXPECT_NEAR(g.relative_gap_percent, 100 * 0.09 / 2.12, 1e-9);
  EXPECT_DOUBLE_EQ(loss_gap(a, a).relative_gap_percent, 0.0);
  LossCurve two{"two", {{0, 3.0}, {1, 2.0}}}, one{"one", {{0, 3.0}, {1, 1.0}}};
  EXPECT_DOUBLE_EQ(loss_gap(one, two).relative_gap_percent, 50.0);
  EXPECT_THROW(loss_gap(LossCurve{}, two), DataError);
}

TEST(LossCurves, CsvParsing) {
  testing::TempDir dir;
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir / name) << body;
    return dir / name;
  };
  const auto c = load_loss_curve(write("ok.csv", "step,loss\n0,2.5\n10, 2.0\n\n"));
  EXPECT_EQ(c.label, "ok");
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points[1].step, 10u);
  EXPECT_THROW(load_loss_curve(write("dec.csv", "0,2\n0,1\n")), DataError);
  EXPECT_THROW(load_loss_curve(write("neg.csv", "0,-1\n")), DataError);
  EXPECT_THROW(load_loss_curve(write("junk.csv", "0,2\nx,y\n")), DataError);
  EXPECT_THROW(load_loss_curve(dir / "missing.csv"), IoError);
}

TEST(Runs, LoadFromData) {
  const auto runs = load_runs(kData / "runs.json");
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[1].label, "1B");
  EXPECT_EQ(runs[1].world_size, 6u);
  EXPECT_DOUBLE_EQ(runs[1].params, 125e6);
  EXPECT_TRUE(runs[0].offload_optimizer);
  EXPECT_DOUBLE_EQ(scaling_efficiency(runs[0], runs[1]).efficiency, 0.9375);
}

}  // namespace
}  // namespace edpack::analysis
