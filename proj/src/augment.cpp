#include "nrmt/augment.hpp"

#include <algorithm>
#include <map>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

AugmentMode augment_mode_from_string(const std::string& name) {
  if (name == "ft") return AugmentMode::ft;
  if (name == "taft") return AugmentMode::taft;
  throw Error(ErrorKind::usage, "unknown augment mode: " + name);
}

std::vector<DatasetExample> build_dataset(const std::vector<std::string>& src_corpus,
                                          const std::vector<std::string>& tgt_corpus,
                                          const std::vector<PerturbationRecord>& records,
                                          Segmenter& src_segmenter,
                                          Segmenter& tgt_segmenter, AugmentMode mode,
                                          bool with_denoise) {
  if (src_corpus.size() != tgt_corpus.size()) {
    throw Error(ErrorKind::data, "parallel corpus sides differ in length: " +
                                     std::to_string(src_corpus.size()) + " vs " +
                                     std::to_string(tgt_corpus.size()));
  }
  // records grouped per sentence, ordered by word index
  std::map<int64_t, std::vector<const PerturbationRecord*>> by_sentence;
  for (const auto& r : records) {
    if (r.sentence < 0 || r.sentence >= static_cast<int64_t>(src_corpus.size())) {
      throw Error(ErrorKind::data,
                  "perturbation record for sentence " + std::to_string(r.sentence) +
                      " outside corpus of size " + std::to_string(src_corpus.size()));
    }
    if (r.clean.empty()) {
      throw Error(ErrorKind::data, "perturbation record with empty clean form at sentence " +
                                       std::to_string(r.sentence));
    }
    by_sentence[r.sentence].push_back(&r);
  }
  for (auto& [s, rs] : by_sentence) {
    std::sort(rs.begin(), rs.end(),
              [](const PerturbationRecord* a, const PerturbationRecord* b) {
                return a->word < b->word;
              });
  }

  const std::string sep = Vocabulary::reserved_tokens()[Vocabulary::kSep];
  std::vector<DatasetExample> out;
  out.reserve(src_corpus.size());
  for (size_t i = 0; i < src_corpus.size(); ++i) {
    DatasetExample ex;
    ex.src = src_segmenter.segment(src_corpus[i]).tokens;
    ex.tgt = tgt_segmenter.segment(tgt_corpus[i]).tokens;
    ex.has_denoise = with_denoise;
    const auto it = by_sentence.find(static_cast<int64_t>(i));
    if (it != by_sentence.end()) {
      if (mode == AugmentMode::taft) {
        ex.tgt.push_back(sep);
        for (const PerturbationRecord* r : it->second) {
          for (auto& piece : tgt_segmenter.segment_word(r->clean)) {
            ex.tgt.push_back(std::move(piece));
          }
        }
      }
      if (with_denoise) {
        for (const PerturbationRecord* r : it->second) {
          for (auto& piece : tgt_segmenter.segment_word(r->clean)) {
            ex.denoise.push_back(std::move(piece));
          }
        }
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<DatasetExample> build_ft(const std::vector<std::string>& src_corpus,
                                     const std::vector<std::string>& tgt_corpus,
                                     const std::vector<PerturbationRecord>& records,
                                     Segmenter& src_segmenter, Segmenter& tgt_segmenter,
                                     bool with_denoise) {
  return build_dataset(src_corpus, tgt_corpus, records, src_segmenter, tgt_segmenter,
                       AugmentMode::ft, with_denoise);
}

std::vector<DatasetExample> build_taft(const std::vector<std::string>& src_corpus,
                                       const std::vector<std::string>& tgt_corpus,
                                       const std::vector<PerturbationRecord>& records,
                                       Segmenter& src_segmenter, Segmenter& tgt_segmenter,
                                       bool with_denoise) {
  return build_dataset(src_corpus, tgt_corpus, records, src_segmenter, tgt_segmenter,
                       AugmentMode::taft, with_denoise);
}

void save_dataset(const std::string& path, const std::vector<DatasetExample>& examples) {
  std::vector<std::string> lines;
  lines.reserve(examples.size());
  for (const auto& ex : examples) {
    std::string line = join_ws(ex.src) + "\t" + join_ws(ex.tgt);
    if (ex.has_denoise) line += "\t" + join_ws(ex.denoise);
    lines.push_back(std::move(line));
  }
  write_lines(path, lines);
}

std::vector<DatasetExample> load_dataset(const std::string& path) {
  std::vector<DatasetExample> out;
  const auto lines = read_lines(path);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    for (size_t i = 0; i <= lines[ln].size(); ++i) {
      if (i == lines[ln].size() || lines[ln][i] == '\t') {
        fields.push_back(lines[ln].substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() < 2 || fields.size() > 3) {
      throw Error(ErrorKind::data, path + ":" + std::to_string(ln + 1) +
                                       ": expected 2 or 3 tab-separated fields");
    }
    DatasetExample ex;
    ex.src = split_ws(fields[0]);
    ex.tgt = split_ws(fields[1]);
    if (fields.size() == 3) {
      ex.denoise = split_ws(fields[2]);
      ex.has_denoise = true;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace nrmt
