#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "nmtk/corpus.hpp"
#include "nmtk/rng.hpp"

using namespace nmtk;

namespace {

SentencePair mk(const std::string& s, const std::string& t) {
  return SentencePair{split_tokens(s), split_tokens(t)};
}

// Brute-force count oracle: reconstructs the original tokens character by
// character, independent of merge_subwords / mono_counts internals.
struct OracleCounts {
  int64_t ntok, nsub, nsubadd, nsep;
};

OracleCounts oracle_counts(const std::vector<std::string>& toks, const std::string& marker) {
  OracleCounts c{0, static_cast<int64_t>(toks.size()), 0, 0};
  int64_t run = 0;
  for (size_t i = 0; i < toks.size(); ++i) {
    bool cont = toks[i].size() >= marker.size() &&
                toks[i].substr(toks[i].size() - marker.size()) == marker;
    run++;
    if (!cont || i + 1 == toks.size()) {
      c.ntok++;
      if (run > 1) c.nsep++;
      run = 0;
    }
  }
  c.nsubadd = c.nsub - c.ntok;
  return c;
}

}  // namespace

TEST_CASE("whitespace normalization collapses runs of blanks and tabs") {
  CHECK(normalize_ws("the\t\tcat") == "the cat");
  CHECK(normalize_ws("  a  b \t c  ") == "a b c");
  CHECK(normalize_ws("") == "");
  CHECK(split_tokens("the\t\tcat") == std::vector<std::string>{"the", "cat"});
}

TEST_CASE("max_keeper keeps the most frequent translation per source") {
  std::vector<SentencePair> pairs{mk("a", "x"), mk("a", "x"), mk("a", "y")};
  auto res = max_keeper(pairs);
  REQUIRE(res.kept.size() == 1);
  CHECK(join_tokens(res.kept[0].tgt) == "x");
  CHECK(res.removed == 2);
}

TEST_CASE("max_keeper ties break by first occurrence") {
  std::vector<SentencePair> pairs{mk("a", "y"), mk("a", "x"), mk("a", "x"), mk("a", "y")};
  auto res = max_keeper(pairs);
  REQUIRE(res.kept.size() == 1);
  CHECK(join_tokens(res.kept[0].tgt) == "y");
}

TEST_CASE("max_keeper preserves order for all-unique pairs") {
  std::vector<SentencePair> pairs{mk("c", "z"), mk("a", "x"), mk("b", "y")};
  auto res = max_keeper(pairs);
  REQUIRE(res.kept.size() == 3);
  CHECK(join_tokens(res.kept[0].src) == "c");
  CHECK(join_tokens(res.kept[1].src) == "a");
  CHECK(join_tokens(res.kept[2].src) == "b");
  CHECK(res.removed == 0);
}

TEST_CASE("max_keeper output has distinct sources and is idempotent") {
  std::vector<SentencePair> pairs{mk("a", "x"), mk("b", "y"), mk("a", "z"), mk("a", "x"), mk("b", "w")};
  auto once = max_keeper(pairs);
  for (size_t i = 0; i < once.kept.size(); ++i)
    for (size_t j = i + 1; j < once.kept.size(); ++j)
      CHECK(join_tokens(once.kept[i].src) != join_tokens(once.kept[j].src));
  auto twice = max_keeper(once.kept);
  REQUIRE(twice.kept.size() == once.kept.size());
  CHECK(twice.removed == 0);
}

TEST_CASE("clean_by_vocab removes sentences saturated with rare types") {
  // 10 types: common c0..c7 appear many times, r1 r2 appear once each
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 5; ++i) pairs.push_back(mk("c0 c1 c2 c3", "c4 c5 c6 c7"));
  pairs.push_back(mk("r1 r2 r1 r2 r1", "c0 c1"));  // all-rare source
  auto res = clean_by_vocab(pairs, 0.2);
  CHECK(res.kept.size() == 5);
  CHECK(res.removed == 1);
  for (const auto& p : res.kept) CHECK(join_tokens(p.src) == "c0 c1 c2 c3");
}

TEST_CASE("clean_by_vocab keeps sentences with zero rare tokens") {
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 4; ++i) pairs.push_back(mk("a b", "c d"));
  pairs.push_back(mk("zz", "a b"));  // rare but only half the cutoff matters
  auto res = clean_by_vocab(pairs, 0.2);
  // 5 types, floor(0.2*5)=1 rare type (zz); "zz" alone is 100% rare > 0.8
  CHECK(res.removed == 1);
  for (const auto& p : res.kept) CHECK(p.src != split_tokens("zz"));
}

TEST_CASE("mono counts on the worked segmentation example") {
  auto toks = split_tokens("the un@@ believ@@ able cat");
  MonoCounts c = mono_counts(toks, "@@");
  CHECK(c.ntok == 3);
  CHECK(c.nsub == 5);
  CHECK(c.nsubadd == 2);
  CHECK(c.nsep == 1);
  MonoRatios r = mono_ratios(c);
  CHECK(r.cratio == doctest::Approx(0.4));
  CHECK(r.bratio == doctest::Approx(5.0 / 3.0));
  CHECK(r.sratio == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("sentence untouched by segmentation gives (0,1,0)") {
  MonoRatios r = mono_ratios(mono_counts(split_tokens("plain words only"), "@@"));
  CHECK(r.cratio == 0.0);
  CHECK(r.bratio == 1.0);
  CHECK(r.sratio == 0.0);
}

TEST_CASE("every token split in two gives bratio 2, sratio 1, cratio 0.5") {
  MonoRatios r = mono_ratios(mono_counts(split_tokens("aa@@ bb cc@@ dd ee@@ ff"), "@@"));
  CHECK(r.bratio == doctest::Approx(2.0));
  CHECK(r.sratio == doctest::Approx(1.0));
  CHECK(r.cratio == doctest::Approx(0.5));
}

TEST_CASE("merge_subwords reconstructs original tokens") {
  auto merged = merge_subwords(split_tokens("the un@@ believ@@ able cat"), "@@");
  CHECK(merged == std::vector<std::string>{"the", "unbelievable", "cat"});
  // dangling marker at the end still closes the group
  auto dangling = merge_subwords(split_tokens("ab@@"), "@@");
  CHECK(dangling == std::vector<std::string>{"ab"});
}

TEST_CASE("mono counts agree with the brute-force oracle on random pairs") {
  RngStream rng(2024, 0);
  const std::vector<std::string> pieces{"ka", "ro", "mi", "ta", "su", "ne"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> toks;
    int64_t n = 1 + static_cast<int64_t>(rng.next_below(12));
    for (int64_t i = 0; i < n; ++i) {
      std::string t = pieces[static_cast<size_t>(rng.next_below(pieces.size()))];
      if (rng.next_u01() < 0.4 && i + 1 < n) t += "@@";
      toks.push_back(t);
    }
    MonoCounts c = mono_counts(toks, "@@");
    OracleCounts o = oracle_counts(toks, "@@");
    CHECK(c.ntok == o.ntok);
    CHECK(c.nsub == o.nsub);
    CHECK(c.nsubadd == o.nsubadd);
    CHECK(c.nsep == o.nsep);
  }
}

TEST_CASE("bi_ratios on the arithmetic example") {
  // nsubsrc=10, nsubtgt=5, nsrc=8, ntgt=4: two src tokens split, one tgt token split
  SentencePair p = mk("a@@ b c@@ d e f g h i j", "k@@ l m n o");
  REQUIRE(p.src.size() == 10);
  REQUIRE(p.tgt.size() == 5);
  REQUIRE(mono_counts(p.src, "@@").ntok == 8);
  REQUIRE(mono_counts(p.tgt, "@@").ntok == 4);
  BiRatios b = bi_ratios(p, "@@");
  CHECK(b.uratio == doctest::Approx(2.0));
  CHECK(b.oratio == doctest::Approx(2.0));
}

TEST_CASE("bi_ratios are symmetric and 1 on equal lengths") {
  SentencePair p = mk("a b c", "x y z");
  BiRatios b = bi_ratios(p, "@@");
  CHECK(b.uratio == doctest::Approx(1.0));
  CHECK(b.oratio == doctest::Approx(1.0));
  SentencePair q = mk("a b c d", "x y");
  SentencePair qr = mk("x y", "a b c d");
  BiRatios b1 = bi_ratios(q, "@@");
  BiRatios b2 = bi_ratios(qr, "@@");
  CHECK(b1.uratio == doctest::Approx(b2.uratio));
  CHECK(b1.oratio == doctest::Approx(b2.oratio));
}

TEST_CASE("thresholds from an untouched dev set are (0,1,0,1,1)") {
  std::vector<SentencePair> dev{mk("a b", "x y"), mk("c d e", "u v w")};
  RatioThresholds t = estimate_thresholds(dev, "@@");
  CHECK(t.max_cratio == 0.0);
  CHECK(t.max_bratio == 1.0);
  CHECK(t.max_sratio == 0.0);
  CHECK(t.max_uratio == 1.0);
  CHECK(t.max_oratio == 1.0);
}

TEST_CASE("threshold picks up the max cratio from the worked example") {
  std::vector<SentencePair> dev{mk("the un@@ believ@@ able cat", "plain text here sir")};
  RatioThresholds t = estimate_thresholds(dev, "@@");
  CHECK(t.max_cratio == doctest::Approx(0.4));
}

TEST_CASE("adding a dev pair never lowers any threshold") {
  std::vector<SentencePair> dev{mk("a@@ b c", "x y")};
  RatioThresholds t1 = estimate_thresholds(dev, "@@");
  dev.push_back(mk("zz@@ qq@@ ww", "m"));
  RatioThresholds t2 = estimate_thresholds(dev, "@@");
  CHECK(t2.max_cratio >= t1.max_cratio);
  CHECK(t2.max_bratio >= t1.max_bratio);
  CHECK(t2.max_sratio >= t1.max_sratio);
  CHECK(t2.max_uratio >= t1.max_uratio);
  CHECK(t2.max_oratio >= t1.max_oratio);
}

TEST_CASE("clean_by_ratios keeps every pair of the set that defined the thresholds") {
  std::vector<SentencePair> dev{mk("the un@@ believ@@ able cat", "le chat in@@ croyable"),
                                mk("a b c", "x y"), mk("one tw@@ o", "uno dos tres")};
  RatioThresholds t = estimate_thresholds(dev, "@@");
  auto res = clean_by_ratios(dev, t, "@@");
  CHECK(res.kept.size() == dev.size());
  CHECK(res.removed == 0);
}

TEST_CASE("clean_by_ratios drops a pair with uratio over the limit") {
  RatioThresholds t;
  t.max_cratio = 1.0;
  t.max_bratio = 10.0;
  t.max_sratio = 1.0;
  t.max_uratio = 2.0;
  t.max_oratio = 10.0;
  std::vector<SentencePair> pairs{mk("a b c d e f", "x y"),  // uratio 3
                                  mk("a b", "x y")};
  auto res = clean_by_ratios(pairs, t, "@@");
  REQUIRE(res.kept.size() == 1);
  CHECK(join_tokens(res.kept[0].src) == "a b");
}

TEST_CASE("ratio cleaning is idempotent") {
  std::vector<SentencePair> pairs{mk("a@@ b c", "x y"), mk("q w e r t y u i", "m"), mk("a", "")};
  RatioThresholds t;
  t.max_cratio = 0.5;
  t.max_bratio = 2.0;
  t.max_sratio = 0.6;
  t.max_uratio = 2.0;
  t.max_oratio = 2.0;
  auto once = clean_by_ratios(pairs, t, "@@");
  auto twice = clean_by_ratios(once.kept, t, "@@");
  CHECK(twice.kept.size() == once.kept.size());
  CHECK(twice.removed == 0);
}

TEST_CASE("vocab cleaning is idempotent on a stable corpus") {
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 6; ++i) pairs.push_back(mk("a b c d", "e f g h"));
  pairs.push_back(mk("r1 r2 r1 r2 r1", "a b"));
  auto once = clean_by_vocab(pairs, 0.2);
  auto twice = clean_by_vocab(once.kept, 0.2);
  CHECK(twice.kept.size() == once.kept.size());
}
