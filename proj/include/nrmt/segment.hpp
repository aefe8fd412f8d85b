#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "nrmt/bpe.hpp"
#include "nrmt/vocab.hpp"

namespace nrmt {

// Source-side granularity. Targets are always BPE-segmented.
enum class SegScheme { word, bpe, chars };

SegScheme seg_scheme_from_string(const std::string& name);
std::string seg_scheme_name(SegScheme scheme);

// Boundary token emitted between words by the character scheme.
inline const char* kWordBoundaryToken = "<sp>";

struct SegmentedSentence {
  std::vector<std::string> tokens;
  SegScheme scheme;
};

// Segments one whitespace-tokenized sentence.
//  word : surface forms; out-of-vocabulary words become "<unk>" (vocab required)
//  bpe  : apply_bpe per word (merges required)
//  chars: one token per code point, with a boundary token between words
class Segmenter {
 public:
  Segmenter(SegScheme scheme, const Vocabulary* vocab, const MergeTable* merges);

  SegmentedSentence segment(const std::string& sentence);
  std::vector<std::string> segment_word(const std::string& word);

 private:
  SegScheme scheme_;
  const Vocabulary* vocab_;
  std::unique_ptr<BpeApplier> applier_;
};

// Inverse of segmentation back to the whitespace-tokenized sentence:
// joins "@@ " junctions for word/bpe, and rebuilds words from characters and
// boundary tokens for the character scheme. Exact for bpe and chars; the word
// scheme is lossy at <unk> positions.
std::string detokenize(const std::vector<std::string>& tokens, SegScheme scheme);

// Counts segmented tokens of a corpus under a scheme, for vocabulary building.
std::unordered_map<std::string, int64_t> count_scheme_tokens(
    const std::vector<std::string>& corpus_lines, SegScheme scheme,
    const MergeTable* merges);

// Vocabulary over the counted tokens; for the bpe scheme every corpus
// character is also added in plain and continuation form so unseen words
// stay representable.
Vocabulary build_scheme_vocab(const std::vector<std::string>& corpus_lines,
                              SegScheme scheme, int64_t top_k, const MergeTable* merges);

}  // namespace nrmt
