#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "nrmt/error.hpp"
#include "nrmt/text.hpp"
#include "nrmt/toytask.hpp"

using namespace nrmt;

TEST_CASE("copy task targets equal their sources line for line") {
  ToyTaskSpec spec;
  spec.task = "copy";
  spec.vocab_size = 10;
  spec.n_train = 20;
  spec.n_dev = 5;
  spec.n_test = 5;
  spec.lexicon_words = 5;
  const ToyTask t = generate_toy_task(spec);
  CHECK(t.train_src == t.train_tgt);
  CHECK(t.test_src == t.test_tgt);
}

TEST_CASE("the same spec generates identical corpora and lexicon") {
  ToyTaskSpec spec;
  spec.task = "cipher";
  spec.vocab_size = 15;
  spec.n_train = 30;
  spec.seed = 77;
  const ToyTask a = generate_toy_task(spec);
  const ToyTask b = generate_toy_task(spec);
  CHECK(a.train_src == b.train_src);
  CHECK(a.train_tgt == b.train_tgt);
  CHECK(a.test_src == b.test_src);
  REQUIRE(a.lexicon.size() == b.lexicon.size());
  for (const auto& [clean, vars] : a.lexicon.entries()) {
    CHECK(b.lexicon.variants(clean) == vars);
  }
}

TEST_CASE("lexicon variants never collide with clean vocabulary words") {
  ToyTaskSpec spec;
  spec.vocab_size = 30;
  spec.lexicon_words = 30;
  spec.variants_per_word = 3;
  spec.seed = 5;
  const ToyTask t = generate_toy_task(spec);
  const std::set<std::string> clean(t.words.begin(), t.words.end());
  CHECK(t.lexicon.size() == 30);
  for (const auto& [key, vars] : t.lexicon.entries()) {
    CHECK(clean.count(key) == 1);
    for (const auto& v : vars) {
      CHECK(clean.count(v) == 0);
      CHECK(v != key);
    }
  }
}

TEST_CASE("full-coverage lexicon covers every generated source word") {
  ToyTaskSpec spec;
  spec.vocab_size = 12;
  spec.lexicon_words = 12;  // coverage 1.0
  const ToyTask t = generate_toy_task(spec);
  for (const auto& line : t.train_src) {
    for (const auto& w : split_ws(line)) CHECK(t.lexicon.has(w));
  }
}

TEST_CASE("a lexicon larger than the vocabulary is rejected") {
  ToyTaskSpec spec;
  spec.vocab_size = 5;
  spec.lexicon_words = 9;
  CHECK_THROWS_AS(generate_toy_task(spec), Error);
}

TEST_CASE("the cipher task applies one fixed wordwise bijection") {
  ToyTaskSpec spec;
  spec.task = "cipher";
  spec.vocab_size = 10;
  spec.n_train = 40;
  spec.lexicon_words = 5;
  const ToyTask t = generate_toy_task(spec);
  std::map<std::string, std::string> mapping;
  for (size_t i = 0; i < t.train_src.size(); ++i) {
    const auto s = split_ws(t.train_src[i]);
    const auto g = split_ws(t.train_tgt[i]);
    REQUIRE(s.size() == g.size());
    for (size_t k = 0; k < s.size(); ++k) {
      const auto it = mapping.find(s[k]);
      if (it == mapping.end()) {
        mapping.emplace(s[k], g[k]);
      } else {
        CHECK(it->second == g[k]);
      }
    }
  }
  // injective on the words seen
  std::set<std::string> images;
  for (const auto& [k, v] : mapping) CHECK(images.insert(v).second);
}

TEST_CASE("toy task files land on disk in the documented formats") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nrmt_toy_write";
  ToyTaskSpec spec;
  spec.vocab_size = 8;
  spec.n_train = 6;
  spec.n_dev = 2;
  spec.n_test = 2;
  spec.lexicon_words = 4;
  const ToyTask t = generate_toy_task(spec);
  write_toy_task(t, dir.string());
  CHECK(read_lines((dir / "train.src").string()).size() == 6);
  CHECK(read_lines((dir / "test.tgt").string()).size() == 2);
  const NoiseLexicon lex = NoiseLexicon::load((dir / "noise_lexicon.tsv").string());
  CHECK(lex.size() == 4);
  fs::remove_all(dir);
}
