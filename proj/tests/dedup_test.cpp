#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "edpack/dedup.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace edpack {
namespace {

// Deliberately weak: at most three buckets, so distinct texts collide constantly.
struct WeakHasher {
  Hash128 operator()(std::string_view s) const noexcept { return Hash128{s.size() % 3, 0}; }
};

// Corpus of n docs drawn from `distinct` base texts, with whitespace variants.
std::vector<Document> corpus_from_pool(std::mt19937_64& rng, std::size_t n, std::size_t distinct) {
  std::vector<std::string> pool;
  for (std::size_t i = 0; i < distinct; ++i) pool.push_back(testing::random_text(rng, 4, 8) + "#" + std::to_string(i));
  std::uniform_int_distribution<std::size_t> pick(0, distinct - 1);
  std::uniform_int_distribution<int> variant(0, 3);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n; ++i) {
    std::string t = pool[pick(rng)];
    switch (variant(rng)) {
      case 0: t += "   "; break;
      case 1: t = "\n\n" + t + "\n"; break;
      default: break;
    }
    docs.push_back({"d" + std::to_string(i), t, {}});
  }
  return docs;
}

std::vector<Document> run(const std::vector<Document>& docs, DedupOptions opts = {}) {
  return dedup_all(VectorSource(docs), opts).first;
}

TEST(Canonicalize, Examples) {
  EXPECT_EQ(canonicalize("abc "), "abc");
  EXPECT_EQ(canonicalize("\n\nabc\n\n"), "abc");
  EXPECT_EQ(canonicalize("a  b"), "a  b");
  EXPECT_EQ(canonicalize("  lead\t\nx \n\n y"), "  lead\nx\n\n y");
  EXPECT_EQ(canonicalize(""), "");
  EXPECT_EQ(canonicalize(" \n\t\n"), "");
}

TEST(Canonicalize, MatchesOracleOnRandomText) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    auto t = testing::random_text(rng);
    if (i % 3 == 0) t = "\n \n" + t + "\n\n";
    EXPECT_EQ(canonicalize(t), oracle::canonical(t));
  }
}

TEST(Murmur3, FrozenVectors) {
  // Reference values from the canonical MurmurHash3_x64_128, seed 0.
  EXPECT_EQ(murmur3_128(""), (Hash128{0, 0}));
  EXPECT_EQ(murmur3_128("hello"), (Hash128{14688674573012802306ULL, 6565844092913065241ULL}));
  EXPECT_EQ(murmur3_128("The quick brown fox jumps over the lazy dog"),
            (Hash128{16378391709484522348ULL, 8809951995912426311ULL}));
}

TEST(Dedup, KeepFirst) {
  std::vector<Document> docs{{"a1", "alpha", {}}, {"b", "beta", {}}, {"a2", "alpha", {}}};
  std::vector<std::pair<std::string, std::string>> drops;
  std::vector<Document> out;
  VectorSource src(docs);
  const auto r = dedup_stream(
      src, [&](Document&& d) { out.push_back(d); },
      [&](const Document& d, const std::string& kept) { drops.emplace_back(d.id, kept); });
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].id, "a1");
  EXPECT_EQ(out[1].id, "b");
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(r.kept, 2u);
  ASSERT_EQ(drops.size(), 1u);
  EXPECT_EQ(drops[0], std::make_pair(std::string("a2"), std::string("a1")));
}

TEST(Dedup, AllDistinctIsIdentity) {
  std::vector<Document> docs;
  for (int i = 0; i < 50; ++i) docs.push_back({"d" + std::to_string(i), "text " + std::to_string(i), {}});
  EXPECT_EQ(run(docs), docs);
}

TEST(Dedup, TrailingWhitespaceVariantsMerge) {
  std::vector<Document> docs{{"a", "line one\nline two", {}}, {"b", "line one  \nline two\n\n", {}}};
  EXPECT_EQ(run(docs).size(), 1u);
}

TEST(Dedup, ThousandFromHundredMatchesOracle) {
  std::mt19937_64 rng(11);
  const auto docs = corpus_from_pool(rng, 1000, 100);
  const auto out = run(docs);
  const auto expect = oracle::dedup(docs);
  EXPECT_EQ(out, expect);
  EXPECT_LE(out.size(), 100u);
}

TEST(Dedup, IdempotentAndSubsequence) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto docs = corpus_from_pool(rng, 400, 1 + trial * 20);
    const auto once = run(docs);
    EXPECT_EQ(run(once), once);
    std::size_t j = 0;
    for (const auto& d : docs) {
      if (j < once.size() && once[j].id == d.id) ++j;
    }
    EXPECT_EQ(j, once.size());
  }
}

TEST(Dedup, WeakHashCausesNoFalseDrops) {
  std::mt19937_64 rng(17);
  const auto docs = corpus_from_pool(rng, 600, 150);
  std::vector<Document> out;
  VectorSource src(docs);
  DedupIndex<WeakHasher> index{WeakHasher{}};
  for (const auto& d : docs) {
    if (!index.admit(d).duplicate) out.push_back(d);
  }
  EXPECT_EQ(out, oracle::dedup(docs));
  EXPECT_GT(index.bucket_collisions(), 0u);

  std::vector<Document> streamed;
  dedup_stream(
      src, [&](Document&& d) { streamed.push_back(d); }, [](const Document&, const std::string&) {}, DedupOptions{},
      WeakHasher{});
  EXPECT_EQ(streamed, out);
}

TEST(Dedup, SpillModeMatchesInMemory) {
  std::mt19937_64 rng(19);
  const auto docs = corpus_from_pool(rng, 800, 200);
  DedupOptions tight;
  tight.memory_budget = 256;
  EXPECT_EQ(run(docs, tight), run(docs));

  DedupIndex<WeakHasher> index(WeakHasher{}, 64);
  for (const auto& d : docs) index.admit(d);
  EXPECT_GT(index.store().spilled_count(), 0u);
  EXPECT_GT(index.store().spill_reads(), 0u);
}

TEST(Dedup, WorkersDoNotChangeOutput) {
  std::mt19937_64 rng(23);
  const auto docs = corpus_from_pool(rng, 3000, 500);
  DedupOptions opts;
  opts.batch_size = 77;
  const auto one = run(docs, opts);
  opts.workers = 4;
  EXPECT_EQ(run(docs, opts), one);
}

TEST(DedupIndex, CountsSumToProcessed) {
  std::mt19937_64 rng(29);
  const auto docs = corpus_from_pool(rng, 500, 60);
  DedupIndex<> index;
  for (const auto& d : docs) index.admit(d);
  EXPECT_EQ(index.kept_count() + index.dropped_count(), docs.size());
  EXPECT_EQ(index.kept_count(), oracle::dedup(docs).size());
}

}  // namespace
}  // namespace edpack
