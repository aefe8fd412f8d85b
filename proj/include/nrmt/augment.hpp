#pragma once

#include <string>
#include <vector>

#include "nrmt/noise.hpp"
#include "nrmt/segment.hpp"

namespace nrmt {

// One parallel example at the token level. Targets never carry BOS/EOS
// framing here; the training loader adds it when encoding to ids.
struct DatasetExample {
  std::vector<std::string> src;      // scheme-segmented, possibly noisy
  std::vector<std::string> tgt;      // target BPE pieces; TAFT appends <sep> + clean pieces
  std::vector<std::string> denoise;  // clean forms of perturbed words, target BPE, source order
  bool has_denoise = false;
};

enum class AugmentMode { ft, taft };

AugmentMode augment_mode_from_string(const std::string& name);

// FT: noisy source re-segmented, target untouched.
// TAFT: additionally appends <sep> and the target-BPE segmentation of each
// perturbed word's clean form to the target sequence.
std::vector<DatasetExample> build_dataset(const std::vector<std::string>& src_corpus,
                                          const std::vector<std::string>& tgt_corpus,
                                          const std::vector<PerturbationRecord>& records,
                                          Segmenter& src_segmenter,
                                          Segmenter& tgt_segmenter, AugmentMode mode,
                                          bool with_denoise);

std::vector<DatasetExample> build_ft(const std::vector<std::string>& src_corpus,
                                     const std::vector<std::string>& tgt_corpus,
                                     const std::vector<PerturbationRecord>& records,
                                     Segmenter& src_segmenter, Segmenter& tgt_segmenter,
                                     bool with_denoise = false);

std::vector<DatasetExample> build_taft(const std::vector<std::string>& src_corpus,
                                       const std::vector<std::string>& tgt_corpus,
                                       const std::vector<PerturbationRecord>& records,
                                       Segmenter& src_segmenter, Segmenter& tgt_segmenter,
                                       bool with_denoise = false);

// One example per line: src TAB tgt [TAB denoise], tokens space separated,
// "@@" markers literal. The denoise field may be empty for clean sentences.
void save_dataset(const std::string& path, const std::vector<DatasetExample>& examples);
std::vector<DatasetExample> load_dataset(const std::string& path);

}  // namespace nrmt
