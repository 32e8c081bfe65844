#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "edpack/config.hpp"
#include "test_util.hpp"

namespace edpack {
namespace {

PipelineConfig parse(const std::string& s) { return config_from_json(nlohmann::json::parse(s)); }

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = parse("{}");
  EXPECT_EQ(c.pack.seq_len, 2000u);
  EXPECT_TRUE(c.pack.insert_doc_sep);
  EXPECT_EQ(c.filter.min_nonempty_lines, 3u);
  EXPECT_EQ(c.filter.ngram_order, 10u);
  EXPECT_DOUBLE_EQ(c.filter.max_top_ngram_coverage, 0.20);
  EXPECT_EQ(c.stream.shuffle_buffer, 0u);
  EXPECT_EQ(c.stream.world_size, 1u);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.workers, 1u);
  EXPECT_EQ(c.shard.codec, Codec::Deflate);
  EXPECT_EQ(c.shard.token_width, 4);
  EXPECT_FALSE(c.shard.write_empty);
  EXPECT_TRUE(c.inputs.empty());
}

TEST(Config, SeqLenOverride) {
  const auto c = parse(R"({"pack": {"seq_len": 1024}})");
  EXPECT_EQ(c.pack.seq_len, 1024u);
  EXPECT_EQ(c.filter.min_nonempty_lines, 3u);
  EXPECT_EQ(c.shard.frame_size, 64u);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(parse(R"({"pack": {"seq_len": 0}})"), ConfigError);
  EXPECT_THROW(parse(R"({"pack": {"seq_len": -5}})"), ConfigError);
  EXPECT_THROW(parse(R"({"pack": {"seq_len": "big"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"filter": {"max_duplicate_line_ratio": 2}})"), ConfigError);
  EXPECT_THROW(parse(R"({"shard": {"token_width": 3}})"), ConfigError);
  EXPECT_THROW(parse(R"({"shard": {"codec": "zstd"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"stream": {"rank": 2, "world_size": 2}})"), ConfigError);
  EXPECT_THROW(parse(R"({"workers": 0})"), ConfigError);
  EXPECT_THROW(parse(R"({"shard": {"frame_size": 5000000000}})"), ConfigError);
  EXPECT_THROW(parse(R"([1, 2])"), ConfigError);
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW(parse(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse(R"({"pack": {"seqlen": 10}})"), ConfigError);
  EXPECT_THROW(parse(R"({"filter": {"min_lines": 3}})"), ConfigError);
  EXPECT_THROW(parse(R"({"analysis": {"tabel": "x"}})"), ConfigError);
}

TEST(Config, SeedFlowsToStreamUnlessOverridden) {
  EXPECT_EQ(parse(R"({"seed": 9})").stream.seed, 9u);
  EXPECT_EQ(parse(R"({"seed": 9, "stream": {"seed": 4}})").stream.seed, 4u);
}

TEST(Config, CodecSpellings) {
  EXPECT_EQ(parse(R"({"shard": {"codec": "none"}})").shard.codec, Codec::None);
  EXPECT_EQ(parse(R"({"shard": {"codec": 1}})").shard.codec, Codec::Deflate);
}

TEST(Config, LoadResolvesRelativePaths) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "cfg");
  std::ofstream(dir / "cfg" / "c.json") << R"({"inputs": ["a.jsonl", "/abs/b.jsonl"], "output_dir": "out",
    "dedup": {"sidecar": "drops.jsonl"}, "analysis": {"table": "t.json", "curves": ["l.csv"]}})";
  const auto c = load_config(dir / "cfg" / "c.json");
  EXPECT_EQ(c.inputs[0], dir / "cfg" / "a.jsonl");
  EXPECT_EQ(c.inputs[1], "/abs/b.jsonl");
  EXPECT_EQ(c.output_dir, dir / "cfg" / "out");
  EXPECT_EQ(*c.dedup.sidecar, dir / "cfg" / "drops.jsonl");
  EXPECT_EQ(*c.analysis.table, dir / "cfg" / "t.json");
  EXPECT_EQ(c.analysis.curves.at(0), dir / "cfg" / "l.csv");
}

TEST(Config, LoadErrors) {
  testing::TempDir dir;
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
}

}  // namespace
}  // namespace edpack
