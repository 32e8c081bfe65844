#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "edpack/pack.hpp"
#include "oracles.hpp"

namespace edpack {
namespace {

TokenizedDoc tdoc(std::size_t n, TokenId start = 10) {
  TokenizedDoc d;
  for (std::size_t i = 0; i < n; ++i) d.tokens.push_back(start + static_cast<TokenId>(i % 200));
  return d;
}

std::pair<std::vector<PackedSequence>, PackResult> pack(const std::vector<TokenizedDoc>& docs, PackConfig cfg) {
  std::vector<PackedSequence> out;
  const auto r = pack_stream(VectorSource(docs), cfg, [&](PackedSequence&& s) { out.push_back(std::move(s)); });
  return {out, r};
}

TEST(Pack, FlatOf4500WithL2000) {
  PackConfig cfg;
  cfg.insert_doc_sep = false;
  const auto [seqs, r] = pack({tdoc(1500), tdoc(3000)}, cfg);
  EXPECT_EQ(seqs.size(), 2u);
  EXPECT_EQ(r.sequences, 2u);
  EXPECT_EQ(r.dropped_tail, 500u);
  EXPECT_EQ(r.flat_length, 4500u);
}

TEST(Pack, EmptyInput) {
  const auto [seqs, r] = pack({}, PackConfig{});
  EXPECT_TRUE(seqs.empty());
  EXPECT_EQ(r.dropped_tail, 0u);
  EXPECT_EQ(r.flat_length, 0u);
}

TEST(Pack, ThreeDocsOf999WithSeparators) {
  const std::vector<TokenizedDoc> docs{tdoc(999, 10), tdoc(999, 20), tdoc(999, 30)};
  const auto [seqs, r] = pack(docs, PackConfig{});
  EXPECT_EQ(r.flat_length, 3000u);
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(r.dropped_tail, 1000u);
  // Hand-built concatenation: doc, sep, doc, sep, doc, sep.
  std::vector<TokenId> expect;
  for (const auto& d : docs) {
    expect.insert(expect.end(), d.tokens.begin(), d.tokens.end());
    expect.push_back(0);
  }
  expect.resize(2000);
  EXPECT_EQ(seqs[0].tokens, expect);
  EXPECT_EQ(seqs[0].tokens[999], 0u);
  EXPECT_EQ(seqs[0].tokens[1999], 0u);
}

TEST(Pack, CustomSeparatorAndExactMultiple) {
  PackConfig cfg;
  cfg.seq_len = 4;
  cfg.sep_id = 2;
  const auto [seqs, r] = pack({tdoc(3), tdoc(3)}, cfg);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].tokens, (std::vector<TokenId>{10, 11, 12, 2}));
  EXPECT_EQ(seqs[1].tokens, (std::vector<TokenId>{10, 11, 12, 2}));
  EXPECT_EQ(r.dropped_tail, 0u);
}

TEST(Pack, RejectsTinySeqLen) {
  PackConfig cfg;
  cfg.seq_len = 1;
  EXPECT_THROW(pack({}, cfg), ConfigError);
}

TEST(PackProperties, RandomCorporaMatchSliceOracle) {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<std::size_t> ndocs(0, 60), doclen(0, 700), seqlen(2, 600);
  std::uniform_int_distribution<TokenId> tok(3, 258);
  for (int trial = 0; trial < 200; ++trial) {
    PackConfig cfg;
    cfg.seq_len = static_cast<std::uint32_t>(seqlen(rng));
    cfg.insert_doc_sep = trial % 3 != 0;
    std::vector<TokenizedDoc> docs(ndocs(rng));
    for (auto& d : docs) {
      d.tokens.resize(doclen(rng));
      for (auto& t : d.tokens) t = tok(rng);
    }
    const auto [seqs, r] = pack(docs, cfg);
    const auto flat = oracle::flat_stream(docs, cfg.insert_doc_sep, cfg.sep_id);
    const std::size_t L = cfg.seq_len;
    ASSERT_EQ(r.flat_length, flat.size());
    EXPECT_EQ(seqs.size(), flat.size() / L);
    EXPECT_EQ(r.sequences * L + r.dropped_tail, flat.size());
    EXPECT_LT(r.dropped_tail, L);
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      ASSERT_EQ(seqs[k].tokens.size(), L);
      EXPECT_EQ(seqs[k].ordinal, k);
      EXPECT_TRUE(std::equal(seqs[k].tokens.begin(), seqs[k].tokens.end(), flat.begin() + static_cast<long>(k * L)));
    }
  }
}

}  // namespace
}  // namespace edpack
