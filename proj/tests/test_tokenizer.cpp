#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "nrmt/bpe.hpp"
#include "nrmt/error.hpp"
#include "nrmt/rng.hpp"
#include "nrmt/segment.hpp"
#include "nrmt/text.hpp"
#include "nrmt/vocab.hpp"

using namespace nrmt;

namespace {

// Independent reference merge loop: recount all pairs each round, take the
// most frequent (lexicographic on ties). Used as the oracle for learn_bpe.
std::vector<std::pair<std::string, std::string>> naive_merge_loop(
    const std::vector<std::string>& lines, int rounds) {
  std::map<std::vector<std::string>, int64_t> words;
  for (const auto& line : lines) {
    for (const auto& w : split_ws(line)) words[utf8_chars(w)]++;
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (int r = 0; r < rounds; ++r) {
    std::map<std::pair<std::string, std::string>, int64_t> pairs;
    for (const auto& [sym, c] : words) {
      for (size_t i = 0; i + 1 < sym.size(); ++i) pairs[{sym[i], sym[i + 1]}] += c;
    }
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (it->second > best->second) best = it;  // map order breaks ties lexicographically
    }
    const auto [l, rgt] = best->first;
    std::map<std::vector<std::string>, int64_t> next;
    for (const auto& [sym, c] : words) {
      std::vector<std::string> out;
      size_t i = 0;
      while (i < sym.size()) {
        if (i + 1 < sym.size() && sym[i] == l && sym[i + 1] == rgt) {
          out.push_back(l + rgt);
          i += 2;
        } else {
          out.push_back(sym[i++]);
        }
      }
      next[out] += c;
    }
    words = std::move(next);
    merges.emplace_back(l, rgt);
  }
  return merges;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("zero merges segments into pure characters with continuations") {
  const MergeTable t = learn_bpe({"abc ab"}, 0);
  CHECK(t.merges.empty());
  const auto pieces = apply_bpe("abc", t);
  REQUIRE(pieces.size() == 3);
  CHECK(pieces[0] == "a@@");
  CHECK(pieces[1] == "b@@");
  CHECK(pieces[2] == "c");
}

TEST_CASE("two merges on 'low low lower' match the hand-run merge loop") {
  // Hand run: pairs (l,o) x3 and (o,w) x3 tie at count 3 -> lexicographic
  // winner (l,o); second round (lo,w) x3 wins. Frozen expectation:
  const std::vector<std::string> corpus = {"low low lower"};
  const MergeTable t = learn_bpe(corpus, 2);
  REQUIRE(t.merges.size() == 2);
  CHECK(t.merges[0] == std::pair<std::string, std::string>("l", "o"));
  CHECK(t.merges[1] == std::pair<std::string, std::string>("lo", "w"));
  // and the independent loop agrees
  const auto oracle = naive_merge_loop(corpus, 2);
  REQUIRE(oracle.size() == 2);
  CHECK(t.merges[0] == oracle[0]);
  CHECK(t.merges[1] == oracle[1]);
}

TEST_CASE("learn_bpe matches the reference loop on random corpora") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(derive_seed(321, seed));
    std::vector<std::string> lines;
    for (int i = 0; i < 20; ++i) {
      std::string line;
      for (int w = 0; w < 6; ++w) {
        std::string word;
        const int len = 2 + static_cast<int>(rng.below(5));
        for (int c = 0; c < len; ++c) word += static_cast<char>('a' + rng.below(6));
        line += (w ? " " : "") + word;
      }
      lines.push_back(line);
    }
    const MergeTable mine = learn_bpe(lines, 12);
    const auto ref = naive_merge_loop(lines, 12);
    REQUIRE(mine.merges.size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i) CHECK(mine.merges[i] == ref[i]);
  }
}

TEST_CASE("re-learning on the same corpus gives an identical table") {
  const std::vector<std::string> corpus = {"ein zwei drei", "zwei drei vier", "drei vier"};
  const MergeTable a = learn_bpe(corpus, 10);
  const MergeTable b = learn_bpe(corpus, 10);
  CHECK(a.merges == b.merges);
}

TEST_CASE("learning on an empty corpus is an error") {
  CHECK_THROWS_AS(learn_bpe({}, 5), Error);
  CHECK_THROWS_AS(learn_bpe({"", "   "}, 5), Error);
}

TEST_CASE("a word learned as a single symbol is kept unchanged") {
  // enough merges to collapse the whole word
  const MergeTable t = learn_bpe({"mond mond mond stern"}, 6);
  const auto pieces = apply_bpe("mond", t);
  REQUIRE(pieces.size() == 1);
  CHECK(pieces[0] == "mond");
}

TEST_CASE("a word missing its full form splits into marked pieces") {
  // merges learned from related words cover prefixes only
  MergeTable t;
  t.merges = {{"a", "n"}, {"an", "d"}, {"a", "r"}, {"ar", "e"}};
  const auto pieces = apply_bpe("andare", t);
  REQUIRE(pieces.size() == 2);
  CHECK(pieces[0] == "and@@");
  CHECK(pieces[1] == "are");
  CHECK(detokenize(pieces, SegScheme::bpe) == "andare");
}

TEST_CASE("a single-character word maps to itself") {
  const MergeTable t = learn_bpe({"x y z"}, 3);
  const auto pieces = apply_bpe("x", t);
  REQUIRE(pieces.size() == 1);
  CHECK(pieces[0] == "x");
}

TEST_CASE("apply then marker-join is the identity on random words") {
  const MergeTable t = learn_bpe({"abab baba abba baab aabb"}, 8);
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    std::string word;
    const int len = 1 + static_cast<int>(rng.below(12));
    for (int c = 0; c < len; ++c) {
      // mixed ascii letters, digits and a few multi-byte code points
      const int64_t pick = rng.below(30);
      if (pick < 26) word += static_cast<char>('a' + pick);
      else if (pick == 26) word += "ü";
      else if (pick == 27) word += "ß";
      else if (pick == 28) word += '9';
      else word += '@';
    }
    const auto pieces = apply_bpe(word, t);
    std::string joined;
    for (size_t p = 0; p < pieces.size(); ++p) {
      if (p + 1 < pieces.size()) {
        joined.append(pieces[p], 0, pieces[p].size() - 2);
      } else {
        joined += pieces[p];
      }
    }
    CHECK(joined == word);
  }
}

TEST_CASE("word scheme keeps in-vocabulary tokens and maps rare words to unk") {
  Vocabulary v;
  v.add("guten");
  v.add("morgen");
  Segmenter seg(SegScheme::word, &v, nullptr);
  const auto s = seg.segment("guten morgen welt");
  REQUIRE(s.tokens.size() == 3);
  CHECK(s.tokens[0] == "guten");
  CHECK(s.tokens[1] == "morgen");
  CHECK(s.tokens[2] == "<unk>");
}

TEST_CASE("char scheme round-trips through detokenize") {
  Segmenter seg(SegScheme::chars, nullptr, nullptr);
  const std::string line = "für alle fälle gut";
  const auto s = seg.segment(line);
  CHECK(detokenize(s.tokens, SegScheme::chars) == line);
  // boundary markers appear between words only
  int boundaries = 0;
  for (const auto& t : s.tokens) boundaries += (t == kWordBoundaryToken);
  CHECK(boundaries == 3);
}

TEST_CASE("bpe scheme round-trips through detokenize on corpus lines") {
  const std::vector<std::string> corpus = {"viele kleine worte", "kleine worte reisen weit",
                                           "weit weit weg"};
  const MergeTable t = learn_bpe(corpus, 20);
  Segmenter seg(SegScheme::bpe, nullptr, &t);
  for (const auto& line : corpus) {
    CHECK(detokenize(seg.segment(line).tokens, SegScheme::bpe) == line);
  }
}

TEST_CASE("top-k vocabulary selection is stable with lexicographic tie-break") {
  std::unordered_map<std::string, int64_t> counts = {
      {"rot", 5}, {"blau", 5}, {"gelb", 3}, {"lila", 3}, {"grau", 1}};
  const Vocabulary v = Vocabulary::from_counts(counts, 3);
  CHECK(v.size() == Vocabulary::kNumReserved + 3);
  // blau < rot at count 5; gelb < lila at count 3
  CHECK(v.token(Vocabulary::kNumReserved + 0) == "blau");
  CHECK(v.token(Vocabulary::kNumReserved + 1) == "rot");
  CHECK(v.token(Vocabulary::kNumReserved + 2) == "gelb");
}

TEST_CASE("merge table and vocabulary files round-trip through their formats") {
  const MergeTable t = learn_bpe({"haus maus laus haut"}, 6);
  const std::string mpath = temp_path("nrmt_test_merges.txt");
  t.save(mpath);
  const MergeTable t2 = MergeTable::load(mpath);
  CHECK(t.merges == t2.merges);
  // golden first line: "left right" in priority order
  const auto lines = read_lines(mpath);
  REQUIRE(!lines.empty());
  CHECK(lines[0] == t.merges[0].first + " " + t.merges[0].second);

  Vocabulary v;
  v.add("haus");
  v.add("maus");
  const std::string vpath = temp_path("nrmt_test_vocab.txt");
  v.save(vpath);
  const Vocabulary v2 = Vocabulary::load(vpath);
  CHECK(v2.size() == v.size());
  CHECK(v2.id("haus") == v.id("haus"));
  const auto vlines = read_lines(vpath);
  CHECK(vlines[0] == "<pad>\t0");
  CHECK(vlines[Vocabulary::kNumReserved] == "haus\t6");
  std::remove(mpath.c_str());
  std::remove(vpath.c_str());
}

TEST_CASE("reserved tokens cannot be added as ordinary entries") {
  Vocabulary v;
  CHECK_THROWS_AS(v.add("<pad>"), Error);
  CHECK_THROWS_AS(v.add("<sep>"), Error);
}

TEST_CASE("bpe vocabulary keeps character fallbacks for unseen words") {
  const std::vector<std::string> corpus = {"tag nacht tag"};
  const MergeTable t = learn_bpe(corpus, 10);
  const Vocabulary v = build_scheme_vocab(corpus, SegScheme::bpe, 0, &t);
  // every corpus character exists in plain and continuation form
  for (const std::string c : {"t", "a", "g", "n", "c", "h"}) {
    CHECK(v.contains(c));
    CHECK(v.contains(c + "@@"));
  }
}
