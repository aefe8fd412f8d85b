#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrmt/noise.hpp"

namespace nrmt {

// Deterministic synthetic translation task plus a synthetic noise lexicon,
// so experiments are self-contained. Noisy variants are character-level
// corruptions of clean words and never collide with any clean word.
struct ToyTaskSpec {
  std::string task = "cipher";  // copy | reverse | cipher
  int64_t vocab_size = 40;
  int64_t len_min = 3;
  int64_t len_max = 8;
  int64_t n_train = 800;
  int64_t n_dev = 100;
  int64_t n_test = 200;
  int64_t lexicon_words = 40;  // vocab_size for full coverage
  int64_t variants_per_word = 2;
  uint64_t seed = 1;

  void validate() const;
};

struct ToyTask {
  std::vector<std::string> words;  // the clean vocabulary
  std::vector<std::string> train_src, train_tgt;
  std::vector<std::string> dev_src, dev_tgt;
  std::vector<std::string> test_src, test_tgt;
  NoiseLexicon lexicon;
};

ToyTask generate_toy_task(const ToyTaskSpec& spec);

// Writes train/dev/test.{src,tgt} plus noise_lexicon.tsv into dir.
void write_toy_task(const ToyTask& task, const std::string& dir);

}  // namespace nrmt
