#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "nrmt/augment.hpp"
#include "nrmt/error.hpp"
#include "nrmt/noise.hpp"
#include "nrmt/rng.hpp"
#include "nrmt/text.hpp"

using namespace nrmt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

int diff_word_count(const std::string& a, const std::string& b) {
  const auto wa = split_ws(a), wb = split_ws(b);
  REQUIRE(wa.size() == wb.size());
  int d = 0;
  for (size_t i = 0; i < wa.size(); ++i) d += (wa[i] != wb[i]);
  return d;
}

NoiseLexicon demo_lexicon() {
  NoiseLexicon lex;
  lex.add("vela", {"vels", "fela"});
  lex.add("karo", {"karro"});
  lex.add("tinu", {"timu"});
  return lex;
}

}  // namespace

TEST_CASE("lexicon line parses into key plus variant list") {
  const std::string path = temp_path("nrmt_lex1.tsv");
  write_lines(path, {"# comment", "melone mellone melne", "", "melone meloone"});
  const NoiseLexicon lex = NoiseLexicon::load(path);
  CHECK(lex.size() == 1);
  const auto& vars = lex.variants("melone");
  REQUIRE(vars.size() == 3);  // duplicate keys merged
  CHECK(vars[0] == "mellone");
  CHECK(vars[1] == "melne");
  CHECK(vars[2] == "meloone");
  std::remove(path.c_str());
}

TEST_CASE("empty lexicon file is usable and perturbation becomes identity") {
  const std::string path = temp_path("nrmt_lex2.tsv");
  write_lines(path, {});
  const NoiseLexicon lex = NoiseLexicon::load(path);
  CHECK(lex.empty());
  const std::vector<std::string> corpus = {"karo vela", "vela tinu"};
  const auto res = perturb_training(corpus, lex, 0.5, 1);
  CHECK(res.corpus == corpus);
  CHECK(res.records.empty());
  std::remove(path.c_str());
}

TEST_CASE("lexicon line without variants is a parse error naming the line") {
  const std::string path = temp_path("nrmt_lex3.tsv");
  write_lines(path, {"melone mellone", "solo"});
  try {
    NoiseLexicon::load(path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("a variant equal to its clean form is rejected") {
  NoiseLexicon lex;
  CHECK_THROWS_AS(lex.add("gleich", {"gleich"}), Error);
}

TEST_CASE("training perturbation replaces exactly one eligible word") {
  NoiseLexicon lex;
  lex.add("vela", {"vels"});
  const std::vector<std::string> corpus = {"alle vela waren gern da ."};
  const auto res = perturb_training(corpus, lex, 1.0, 42);
  REQUIRE(res.records.size() == 1);
  CHECK(res.corpus[0] == "alle vels waren gern da .");
  CHECK(res.records[0].sentence == 0);
  CHECK(res.records[0].word == 1);
  CHECK(res.records[0].clean == "vela");
  CHECK(res.records[0].noisy == "vels");
}

TEST_CASE("training perturbation with fraction zero is the identity") {
  const auto lex = demo_lexicon();
  const std::vector<std::string> corpus = {"karo vela", "tinu vela", "vela karo"};
  const auto res = perturb_training(corpus, lex, 0.0, 7);
  CHECK(res.corpus == corpus);
  CHECK(res.records.empty());
}

TEST_CASE("fraction 0.5 on a fully eligible 1000-sentence corpus gives exactly 500") {
  const auto lex = demo_lexicon();
  Rng gen(5);
  std::vector<std::string> corpus;
  const std::vector<std::string> keys = {"vela", "karo", "tinu"};
  const std::vector<std::string> filler = {"gut", "rot", "neu", "alt"};
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> words;
    const int len = 3 + static_cast<int>(gen.below(4));
    words.push_back(keys[static_cast<size_t>(gen.below(3))]);  // guarantee eligibility
    for (int w = 1; w < len; ++w) {
      words.push_back(gen.uniform() < 0.4 ? keys[static_cast<size_t>(gen.below(3))]
                                          : filler[static_cast<size_t>(gen.below(4))]);
    }
    gen.shuffle(words);
    corpus.push_back(join_ws(words));
  }
  const auto res = perturb_training(corpus, lex, 0.5, 99);
  CHECK(res.records.size() == 500);
  // diff-count oracle: every perturbed sentence differs in exactly one word
  int perturbed = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const int d = diff_word_count(corpus[i], res.corpus[i]);
    CHECK(d <= 1);
    perturbed += (d == 1);
  }
  CHECK(perturbed == 500);
  CHECK(res.achieved_fraction == doctest::Approx(0.5));
}

TEST_CASE("fractions outside [0,1] are rejected") {
  const auto lex = demo_lexicon();
  CHECK_THROWS_AS(perturb_training({"vela"}, lex, -0.1, 1), Error);
  CHECK_THROWS_AS(perturb_training({"vela"}, lex, 1.5, 1), Error);
  CHECK_THROWS_AS(perturb_test({"vela"}, lex, 2.0, 1), Error);
}

TEST_CASE("test perturbation hits exactly the targeted word count") {
  NoiseLexicon lex;
  for (int i = 0; i < 10; ++i) {
    const std::string w = "wort" + std::to_string(i);
    lex.add(w, {w + "x"});
  }
  // 20 sentences x 5 words = 100 words, all eligible
  std::vector<std::string> corpus;
  Rng gen(3);
  for (int s = 0; s < 20; ++s) {
    std::vector<std::string> words;
    for (int w = 0; w < 5; ++w) words.push_back("wort" + std::to_string(gen.below(10)));
    corpus.push_back(join_ws(words));
  }
  const auto res = perturb_test(corpus, lex, 0.10, 17);
  int diffs = 0;
  for (size_t i = 0; i < corpus.size(); ++i) diffs += diff_word_count(corpus[i], res.corpus[i]);
  CHECK(diffs == 10);
  CHECK(res.records.size() == 10);
  CHECK(res.achieved_fraction == doctest::Approx(0.10));
}

TEST_CASE("test perturbation reports the achieved fraction on exhaustion") {
  NoiseLexicon lex;
  lex.add("selten", {"seltn"});
  // 100 words, only 3 eligible
  std::vector<std::string> corpus;
  for (int s = 0; s < 20; ++s) {
    std::vector<std::string> words(5, "voll");
    if (s < 3) words[2] = "selten";
    corpus.push_back(join_ws(words));
  }
  const auto res = perturb_test(corpus, lex, 0.30, 11);
  CHECK(res.records.size() == 3);
  CHECK(res.achieved_fraction == doctest::Approx(0.03));
}

TEST_CASE("perturbation is byte-identical under the same seed") {
  const auto lex = demo_lexicon();
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back("karo vela tinu gut rot");
  const auto a = perturb_training(corpus, lex, 0.5, 1234);
  const auto b = perturb_training(corpus, lex, 0.5, 1234);
  CHECK(a.corpus == b.corpus);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].sentence == b.records[i].sentence);
    CHECK(a.records[i].word == b.records[i].word);
    CHECK(a.records[i].noisy == b.records[i].noisy);
  }
  const auto c = perturb_test(corpus, lex, 0.2, 777);
  const auto d = perturb_test(corpus, lex, 0.2, 777);
  CHECK(c.corpus == d.corpus);
}

TEST_CASE("a perturbed word re-segmented under any scheme detokenizes to its noisy form") {
  NoiseLexicon lex;
  lex.add("sonne", {"sonme"});
  const std::vector<std::string> corpus = {"die sonne lacht"};
  const auto res = perturb_training(corpus, lex, 1.0, 5);
  REQUIRE(res.records.size() == 1);
  const MergeTable merges = learn_bpe({"die sonne lacht oft"}, 12);
  Segmenter bpe_seg(SegScheme::bpe, nullptr, &merges);
  Segmenter char_seg(SegScheme::chars, nullptr, nullptr);
  CHECK(detokenize(bpe_seg.segment(res.corpus[0]).tokens, SegScheme::bpe) == res.corpus[0]);
  CHECK(detokenize(char_seg.segment(res.corpus[0]).tokens, SegScheme::chars) == res.corpus[0]);
}

// ---- augmentation ----

namespace {

struct AugmentFixture {
  std::vector<std::string> src = {"alle novin waren gern da .", "so geht es gut ."};
  std::vector<std::string> tgt = {"all of them were here .", "so it goes well ."};
  std::vector<PerturbationRecord> records;
  MergeTable src_merges, tgt_merges;

  AugmentFixture() {
    // noisy form of "anovel" - style fixture: clean "anovel" noisy "novin";
    // target BPE knows "anovel" as one symbol only when merged enough
    records.push_back({0, 1, "anovel", "novin"});
    src_merges = learn_bpe({"alle waren gern da so geht es gut no vin anovel"}, 8);
    tgt_merges = learn_bpe({"all of them were here so it goes well anovel anovel anovel"}, 40);
  }
};

}  // namespace

TEST_CASE("ft keeps the target side untouched while the source is noisy") {
  AugmentFixture f;
  Segmenter src_seg(SegScheme::bpe, nullptr, &f.src_merges);
  Segmenter tgt_seg(SegScheme::bpe, nullptr, &f.tgt_merges);
  const auto examples = build_ft(f.src, f.tgt, f.records, src_seg, tgt_seg);
  REQUIRE(examples.size() == 2);  // one example per corpus line, no filtering
  CHECK(detokenize(examples[0].src, SegScheme::bpe) == f.src[0]);
  CHECK(detokenize(examples[0].tgt, SegScheme::bpe) == f.tgt[0]);
  CHECK(detokenize(examples[1].tgt, SegScheme::bpe) == f.tgt[1]);
}

TEST_CASE("taft appends sep plus the clean form; clean sentences match ft") {
  AugmentFixture f;
  Segmenter src_seg(SegScheme::bpe, nullptr, &f.src_merges);
  Segmenter tgt_seg(SegScheme::bpe, nullptr, &f.tgt_merges);
  const auto ft = build_ft(f.src, f.tgt, f.records, src_seg, tgt_seg);
  const auto taft = build_taft(f.src, f.tgt, f.records, src_seg, tgt_seg);
  REQUIRE(taft.size() == 2);

  // FT and TAFT sources are identical
  CHECK(taft[0].src == ft[0].src);
  CHECK(taft[1].src == ft[1].src);
  // clean sentence: no sentinel, bit-identical to FT
  CHECK(taft[1].tgt == ft[1].tgt);

  // perturbed sentence: tgt = ft tgt + <sep> + clean pieces
  REQUIRE(taft[0].tgt.size() > ft[0].tgt.size());
  CHECK(taft[0].tgt[ft[0].tgt.size()] == "<sep>");
  std::vector<std::string> appendix(taft[0].tgt.begin() +
                                        static_cast<int64_t>(ft[0].tgt.size()) + 1,
                                    taft[0].tgt.end());
  // appendix detokenizes back to the clean word, single- or multi-piece
  CHECK(detokenize(appendix, SegScheme::bpe) == "anovel");
}

TEST_CASE("a clean word known to the target bpe is appended as one piece") {
  AugmentFixture f;
  // target merges were trained with enough "anovel" mass to merge it fully
  const auto pieces = apply_bpe("anovel", f.tgt_merges);
  REQUIRE(pieces.size() == 1);
  CHECK(pieces[0] == "anovel");
}

TEST_CASE("stripping sep and its suffix from taft targets reproduces ft targets") {
  AugmentFixture f;
  Segmenter src_seg(SegScheme::bpe, nullptr, &f.src_merges);
  Segmenter tgt_seg(SegScheme::bpe, nullptr, &f.tgt_merges);
  const auto ft = build_ft(f.src, f.tgt, f.records, src_seg, tgt_seg);
  const auto taft = build_taft(f.src, f.tgt, f.records, src_seg, tgt_seg);
  for (size_t i = 0; i < ft.size(); ++i) {
    std::vector<std::string> stripped;
    for (const auto& tok : taft[i].tgt) {
      if (tok == "<sep>") break;
      stripped.push_back(tok);
    }
    CHECK(stripped == ft[i].tgt);
  }
}

TEST_CASE("denoise targets hold clean pieces in source order") {
  std::vector<std::string> src = {"eins zwei drei vier"};
  std::vector<std::string> tgt = {"one two three four"};
  std::vector<PerturbationRecord> records = {{0, 3, "vier", "fier"}, {0, 1, "zwei", "zwai"}};
  MergeTable m = learn_bpe(src, 2);
  MergeTable mt = learn_bpe({"one two three four zwei vier zwei vier zwei vier"}, 30);
  Segmenter src_seg(SegScheme::bpe, nullptr, &m);
  Segmenter tgt_seg(SegScheme::bpe, nullptr, &mt);
  const auto examples = build_ft(src, tgt, records, src_seg, tgt_seg, true);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].has_denoise);
  //word index 1 ("zwei") comes before word index 3 ("vier")
  CHECK(detokenize(examples[0].denoise, SegScheme::bpe) == "zwei vier");
}

TEST_CASE("a record with an empty clean form is rejected") {
  AugmentFixture f;
  Segmenter src_seg(SegScheme::bpe, nullptr, &f.src_merges);
  Segmenter tgt_seg(SegScheme::bpe, nullptr, &f.tgt_merges);
  std::vector<PerturbationRecord> bad = {{0, 1, "", "novin"}};
  CHECK_THROWS_AS(build_taft(f.src, f.tgt, bad, src_seg, tgt_seg), Error);
}

TEST_CASE("dataset files round-trip including empty denoise fields") {
  AugmentFixture f;
  Segmenter src_seg(SegScheme::bpe, nullptr, &f.src_merges);
  Segmenter tgt_seg(SegScheme::bpe, nullptr, &f.tgt_merges);
  const auto examples = build_ft(f.src, f.tgt, f.records, src_seg, tgt_seg, true);
  CHECK(examples[1].denoise.empty());  // clean sentence
  const std::string path = temp_path("nrmt_dataset.tsv");
  save_dataset(path, examples);
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == examples.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].src == examples[i].src);
    CHECK(loaded[i].tgt == examples[i].tgt);
    CHECK(loaded[i].denoise == examples[i].denoise);
    CHECK(loaded[i].has_denoise == examples[i].has_denoise);
  }
  std::remove(path.c_str());
}

TEST_CASE("perturbation records round-trip through their file format") {
  const std::string path = temp_path("nrmt_records.tsv");
  std::vector<PerturbationRecord> records = {{3, 1, "vela", "vels"}, {7, 0, "karo", "karro"}};
  save_records(path, records);
  const auto loaded = load_records(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].sentence == 3);
  CHECK(loaded[0].word == 1);
  CHECK(loaded[0].clean == "vela");
  CHECK(loaded[1].noisy == "karro");
  std::remove(path.c_str());
}
