#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nrmt/decode.hpp"
#include "nrmt/noise.hpp"

namespace nrmt {

struct BleuResult {
  double score = 0.0;  // in [0, 100]
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  int64_t hyp_len = 0;
  int64_t ref_len = 0;
};

// Corpus BLEU on tokenized text: geometric mean of modified 1..4-gram
// precisions times the brevity penalty, scaled by 100. With smoothing on,
// zero match counts use add-one smoothing ((m+1)/(d+1)); orders with no
// hypothesis n-grams contribute a neutral factor.
BleuResult corpus_bleu(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references, int max_n = 4,
                       bool smoothing = true);

struct SweepRow {
  std::string model_id;
  double fraction = 0.0;
  double requested_fraction = 0.0;
  double achieved_fraction = 0.0;
  double bleu = 0.0;
  double rel_drop = 0.0;  // (bleu0 - bleu) / bleu0
};

struct SweepReport {
  std::vector<SweepRow> rows;

  std::string to_tsv() const;    // header + one row per fraction
  std::string to_table() const;  // aligned view: score (-drop%)
};

// Perturbs the clean test set at each fraction (seed + round(100*fraction)
// per row), translates, scores, and reports absolute BLEU plus the relative
// drop against the 0% row. `fractions` must contain 0.
SweepReport robustness_sweep(Translator& translator,
                             const std::vector<std::string>& test_src,
                             const std::vector<std::string>& test_ref,
                             const NoiseLexicon& lexicon,
                             const std::vector<double>& fractions, uint64_t seed,
                             const std::string& model_id);

}  // namespace nrmt
