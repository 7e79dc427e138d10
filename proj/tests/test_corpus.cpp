#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "adactx/corpus.hpp"
#include "adactx/error.hpp"
#include "test_util.hpp"

namespace adactx {
namespace {

DocumentCorpus small_corpus() {
  DocumentCorpus c;
  auto enc = [&](const char* s) {
    TokenIds ids;
    for (const auto& t : split_whitespace(s)) ids.push_back(c.vocab.add(t));
    return ids;
  };
  c.documents = {
      {{enc("a b"), enc("A B")}, {enc("c d e"), enc("C D E")}, {enc("f"), enc("F")}},
      {{enc("g h"), enc("G H")}},
  };
  return c;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

TEST(Vocabulary, ReservedIdsFixedAndBijective) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id("<pad>"), tok::kPad);
  EXPECT_EQ(v.id("<bos>"), tok::kBos);
  EXPECT_EQ(v.id("<eos>"), tok::kEos);
  EXPECT_EQ(v.id("<sep>"), tok::kSep);
  EXPECT_EQ(v.id("<mask>"), tok::kMask);
  EXPECT_EQ(v.id("<unk>"), tok::kUnk);
  EXPECT_EQ(v.add("x"), 6);
  EXPECT_EQ(v.add("x"), 6);
  EXPECT_EQ(v.add("y"), 7);
  EXPECT_EQ(v.id("never"), tok::kUnk);
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(v.size()); ++i) EXPECT_EQ(v.id(v.token(i)), i);
  EXPECT_EQ(v.decode(v.encode("x y x")), "x y x");
}

TEST(Vocabulary, FileRoundTrip) {
  testing::TempDir dir;
  Vocabulary v;
  v.add("alpha");
  v.add("beta");
  v.write(dir / "v.txt");
  EXPECT_EQ(Vocabulary::read(dir / "v.txt"), v);
}

TEST(Variants, ConcatenateLayout) {
  const DocumentCorpus c = small_corpus();
  const auto vs = build_variants(c, 0, 1, VariantKind::Concatenate);
  ASSERT_EQ(vs.size(), 4u);
  const std::int32_t a = 6, b = 7, cc = 10, d = 11, e = 12, f = 16;
  const std::int32_t A = 8, B = 9, C = 13, D = 14, E = 15;
  EXPECT_EQ(vs[0].src_ids, (TokenIds{cc, d, e}));
  EXPECT_EQ(vs[1].src_ids, (TokenIds{a, b, tok::kSep, cc, d, e}));
  EXPECT_EQ(vs[1].src_segments, (TokenIds{0, 0, 3, 1, 1, 1}));
  EXPECT_EQ(vs[2].src_ids, (TokenIds{cc, d, e, tok::kSep, f}));
  EXPECT_EQ(vs[2].src_segments, (TokenIds{1, 1, 1, 3, 2}));
  EXPECT_EQ(vs[3].src_ids, (TokenIds{a, b, tok::kSep, cc, d, e, tok::kSep, f}));

  EXPECT_EQ(vs[0].tgt_ids, (TokenIds{C, D, E, tok::kEos}));
  EXPECT_TRUE(vs[0].forced_tgt_prefix.empty());
  EXPECT_EQ(vs[1].tgt_ids, (TokenIds{A, B, tok::kSep, C, D, E, tok::kEos}));
  EXPECT_EQ(vs[1].forced_tgt_prefix, (TokenIds{A, B, tok::kSep}));
  EXPECT_EQ(vs[1].tgt_loss_mask, (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1, 1}));
  EXPECT_EQ(vs[2].tgt_ids, vs[0].tgt_ids);
  for (int o = 0; o < 4; ++o) {
    EXPECT_EQ(vs[o].option, o);
    EXPECT_EQ(vs[o].dec_depth_delta, kConcatDepthDelta[o]);
  }
}

TEST(Variants, EdgeFallbackKeepsOptionId) {
  const DocumentCorpus c = small_corpus();
  const auto single = build_variants(c, 1, 0, VariantKind::Concatenate);
  for (int o = 0; o < 4; ++o) {
    EXPECT_EQ(single[o].option, o);
    EXPECT_EQ(single[o].src_ids, single[0].src_ids);
    EXPECT_EQ(single[o].tgt_ids, single[0].tgt_ids);
  }
  const auto cu = build_variants(c, 0, 0, VariantKind::ContextUnit);
  ASSERT_EQ(cu.size(), 3u);
  EXPECT_EQ(cu[0].ctx_ids, cu[0].src_ids);       // no previous sentence
  EXPECT_EQ(cu[1].ctx_ids, (TokenIds{10, 11, 12}));  // next sentence
  EXPECT_EQ(cu[1].ctx_segments, (TokenIds{2, 2, 2}));
  EXPECT_EQ(cu[2].ctx_ids, cu[2].src_ids);
}

TEST(Variants, InvariantsOverCorpus) {
  const DocumentCorpus c = small_corpus();
  for (auto kind : {VariantKind::Concatenate, VariantKind::ContextUnit})
    for (std::size_t d = 0; d < c.documents.size(); ++d)
      for (std::size_t s = 0; s < c.documents[d].size(); ++s)
        for (const auto& v : build_variants(c, d, s, kind)) {
          EXPECT_EQ(v.tgt_loss_mask.size(), v.tgt_ids.size());
          EXPECT_EQ(v.src_ids.size(), v.src_segments.size());
          EXPECT_EQ(v.tgt_ids.back(), tok::kEos);
          std::size_t on = 0;
          for (auto m : v.tgt_loss_mask) on += m;
          EXPECT_EQ(on, c.documents[d][s].tgt.size() + 1);
          EXPECT_TRUE(v.dec_depth_delta >= 0 && v.dec_depth_delta <= 2);
        }
  EXPECT_THROW(build_variants(c, 2, 0, VariantKind::Concatenate), Error);
  EXPECT_EQ(empty_context_option(VariantKind::Concatenate), 0);
  EXPECT_EQ(empty_context_option(VariantKind::ContextUnit), 2);
  EXPECT_EQ(option_name(VariantKind::Concatenate, 3), "pre||source||pos");
}

TEST(Mask, BinomialCount) {
  ContextVariant v;
  v.src_ids.assign(1000, 20);
  v.src_segments.assign(1000, seg::kCurrent);
  const double sd = std::sqrt(1000 * 0.15 * 0.85);
  double total = 0.0, mask_tokens = 0.0, picked = 0.0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    Rng rng = make_rng({static_cast<std::uint64_t>(s), 99});
    const MaskedSource m = apply_source_mask(v, rng, 0.15, 41);
    const double n = static_cast<double>(m.positions.size());
    EXPECT_LT(std::abs(n - 150.0), 5 * sd);
    total += n;
    for (std::size_t p : m.positions) {
      picked += 1;
      if (m.variant.src_ids[p] == tok::kMask) mask_tokens += 1;
    }
  }
  EXPECT_LT(std::abs(total / seeds - 150.0), 4 * sd / std::sqrt(double(seeds)));
  EXPECT_NEAR(mask_tokens / picked, 0.8, 0.01);
}

TEST(Mask, OnlyCurrentSentenceTokens) {
  const DocumentCorpus c = small_corpus();
  const auto v = build_variants(c, 0, 1, VariantKind::Concatenate)[3];
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const MaskedSource m = apply_source_mask(v, rng, 0.9, 41);
    for (std::size_t i = 0; i < m.positions.size(); ++i) {
      EXPECT_EQ(v.src_segments[m.positions[i]], seg::kCurrent);
      EXPECT_EQ(m.original_ids[i], v.src_ids[m.positions[i]]);
      EXPECT_GE(m.variant.src_ids[m.positions[i]], tok::kMask);
    }
    for (std::size_t i = 0; i < v.src_ids.size(); ++i)
      if (v.src_segments[i] != seg::kCurrent) EXPECT_EQ(m.variant.src_ids[i], v.src_ids[i]);
  }
  EXPECT_THROW(apply_source_mask(v, rng, 1.0, 41), Error);
}

TEST(CorpusIo, RoundTrip) {
  testing::TempDir dir;
  DocumentCorpus c = small_corpus();
  c.labels = {{{0, -1}, {1, 2}, {3, 0}}, {{2, 1}}};
  write_corpus(dir / "c.txt", c);
  write_labels(dir / "c.labels", c);
  EXPECT_EQ(read_text(dir / "c.txt"), "a b ||| A B\nc d e ||| C D E\nf ||| F\n\ng h ||| G H\n");
  DocumentCorpus back = read_corpus(dir / "c.txt");
  read_labels(dir / "c.labels", back);
  EXPECT_EQ(back, c);
}

TEST(CorpusIo, FixedVocabularyMapsUnknown) {
  testing::TempDir dir;
  write_text(dir / "c.txt", "a zz ||| A\n");
  Vocabulary v;
  v.add("a");
  v.add("A");
  const DocumentCorpus c = read_corpus(dir / "c.txt", &v);
  EXPECT_EQ(c.documents[0][0].src, (TokenIds{6, tok::kUnk}));
  EXPECT_EQ(c.vocab, v);
}

TEST(CorpusIo, ParseErrorsCarryLineNumbers) {
  testing::TempDir dir;
  auto message = [&](const std::string& text) {
    write_text(dir / "bad.txt", text);
    try {
      read_corpus(dir / "bad.txt");
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Parse);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("a ||| A\nb B\n").find("bad.txt:2: missing '|||'"), std::string::npos);
  EXPECT_NE(message("a ||| A\n\n\nb ||| B\n").find(":3: empty document"), std::string::npos);
  EXPECT_NE(message("\na ||| A\n").find(":1: empty document"), std::string::npos);
  EXPECT_NE(message("a ||| \n").find(":1: empty side"), std::string::npos);
  EXPECT_NE(message("a ||| A ||| B\n").find("more than one"), std::string::npos);
  EXPECT_NE(message("").find("no documents"), std::string::npos);
  try {
    read_corpus(dir / "missing.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

TEST(CorpusIo, LabelErrors) {
  testing::TempDir dir;
  DocumentCorpus c = small_corpus();
  write_text(dir / "l.txt", "0 -1\n1 0\n");
  EXPECT_THROW(read_labels(dir / "l.txt", c), Error);
  write_text(dir / "l.txt", "0 -1\n7 0\n0 0\n\n0 0\n");
  EXPECT_THROW(read_labels(dir / "l.txt", c), Error);
}

TEST(Hypotheses, RoundTripWithEmptyLines) {
  testing::TempDir dir;
  Vocabulary v;
  v.add("x");
  v.add("y");
  const std::vector<std::vector<TokenIds>> docs{{{6, 7}, {}}, {{7}}};
  write_hypotheses(dir / "h.txt", v, docs);
  EXPECT_EQ(read_text(dir / "h.txt"), "x y\n\n\ny\n");
  const std::vector<std::size_t> sizes{2, 1};
  const auto back = read_hypotheses(dir / "h.txt", sizes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0][0], (std::vector<std::string>{"x", "y"}));
  EXPECT_TRUE(back[0][1].empty());
  EXPECT_EQ(back[1][0], (std::vector<std::string>{"y"}));
  const std::vector<std::size_t> wrong{3};
  EXPECT_THROW(read_hypotheses(dir / "h.txt", wrong), Error);
  const std::vector<std::size_t> fewer{1};
  EXPECT_THROW(read_hypotheses(dir / "h.txt", fewer), Error);
}

TEST(Corpus, Validate) {
  DocumentCorpus c = small_corpus();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.sentence_count(), 4u);
  c.labels = {{{0, -1}}};
  EXPECT_THROW(c.validate(), Error);
  c.labels.clear();
  c.documents.push_back({});
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace adactx
