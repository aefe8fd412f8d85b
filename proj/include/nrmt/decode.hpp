#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nrmt/checkpoint.hpp"
#include "nrmt/segment.hpp"
#include "nrmt/transformer.hpp"
#include "nrmt/vocab.hpp"

namespace nrmt {

struct DecodeOptions {
  int64_t beam_size = 4;
  int64_t max_len = 0;  // 0 = model max_seq_len
  double length_penalty = 0.6;
};

struct Hypothesis {
  std::vector<int64_t> ids;  // generated ids, BOS excluded
  double log_prob = 0.0;
  bool finished = false;
};

// Per-step candidate prefixes, for property tests on the search.
struct DecodeTrace {
  std::vector<std::vector<std::vector<int64_t>>> step_candidates;
};

// Beam search over the translation head. Generation halts per hypothesis at
// EOS or SEP (TAFT sentinel); neither appears in the returned ids, and PAD,
// BOS and REP are never produced. Scores are length-normalized with the
// ((5+len)/6)^alpha penalty; ties break toward the lower token id.
std::vector<int64_t> translate_ids(const std::vector<int64_t>& src_ids,
                                   const ModelConfig& config, const ParamMap& params,
                                   const DecodeOptions& opts, DecodeTrace* trace = nullptr);

// Checkpoint + vocabularies + source segmentation bundled for line-level use.
// Auxiliary-encoder parameters ("aux.") and the denoise head are not consulted.
class Translator {
 public:
  Translator(const std::string& ckpt_path, const std::string& src_vocab_path,
             const std::string& src_merges_path, const std::string& tgt_vocab_path,
             DecodeOptions opts);

  // One whitespace-tokenized source sentence in, one tokenized translation
  // out ("@@" junctions joined). An empty line yields an empty line.
  std::string translate_line(const std::string& line);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& tgt_vocab() const { return tgt_vocab_; }

 private:
  ModelConfig cfg_;
  ParamMap params_;
  Vocabulary src_vocab_;
  Vocabulary tgt_vocab_;
  std::optional<MergeTable> merges_;
  std::unique_ptr<Segmenter> segmenter_;
  DecodeOptions opts_;
};

}  // namespace nrmt
