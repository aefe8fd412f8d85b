#include "nrmt/segment.hpp"

#include <memory>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

SegScheme seg_scheme_from_string(const std::string& name) {
  if (name == "word") return SegScheme::word;
  if (name == "bpe") return SegScheme::bpe;
  if (name == "char") return SegScheme::chars;
  throw Error(ErrorKind::usage, "unknown segmentation scheme: " + name);
}

std::string seg_scheme_name(SegScheme scheme) {
  switch (scheme) {
    case SegScheme::word: return "word";
    case SegScheme::bpe: return "bpe";
    case SegScheme::chars: return "char";
  }
  return "?";
}

Segmenter::Segmenter(SegScheme scheme, const Vocabulary* vocab, const MergeTable* merges)
    : scheme_(scheme), vocab_(vocab) {
  if (scheme == SegScheme::word && vocab == nullptr) {
    throw Error(ErrorKind::usage, "word scheme requires a vocabulary");
  }
  if (scheme == SegScheme::bpe) {
    if (merges == nullptr) throw Error(ErrorKind::usage, "bpe scheme requires a merge table");
    applier_ = std::make_unique<BpeApplier>(*merges);
  }
}

std::vector<std::string> Segmenter::segment_word(const std::string& word) {
  switch (scheme_) {
    case SegScheme::word:
      return {vocab_->contains(word) ? word : Vocabulary::reserved_tokens()[Vocabulary::kUnk]};
    case SegScheme::bpe:
      return applier_->pieces(word);
    case SegScheme::chars:
      return utf8_chars(word);
  }
  return {};
}

SegmentedSentence Segmenter::segment(const std::string& sentence) {
  SegmentedSentence out;
  out.scheme = scheme_;
  const auto words = split_ws(sentence);
  for (size_t i = 0; i < words.size(); ++i) {
    if (scheme_ == SegScheme::chars && i > 0) out.tokens.push_back(kWordBoundaryToken);
    for (auto& piece : segment_word(words[i])) out.tokens.push_back(std::move(piece));
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens, SegScheme scheme) {
  std::vector<std::string> words;
  std::string cur;
  if (scheme == SegScheme::chars) {
    for (const auto& tok : tokens) {
      if (tok == kWordBoundaryToken) {
        words.push_back(cur);
        cur.clear();
      } else {
        cur += tok;
      }
    }
    if (!cur.empty() || !tokens.empty()) words.push_back(cur);
  } else {
    for (const auto& tok : tokens) {
      if (tok.size() >= 2 && tok.compare(tok.size() - 2, 2, "@@") == 0) {
        cur.append(tok, 0, tok.size() - 2);
      } else {
        cur += tok;
        words.push_back(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(cur);
  }
  return join_ws(words);
}

std::unordered_map<std::string, int64_t> count_scheme_tokens(
    const std::vector<std::string>& corpus_lines, SegScheme scheme,
    const MergeTable* merges) {
  std::unordered_map<std::string, int64_t> counts;
  std::unique_ptr<BpeApplier> applier;
  if (scheme == SegScheme::bpe) {
    if (merges == nullptr) throw Error(ErrorKind::usage, "bpe scheme requires a merge table");
    applier = std::make_unique<BpeApplier>(*merges);
  }
  for (const auto& line : corpus_lines) {
    const auto words = split_ws(line);
    for (size_t i = 0; i < words.size(); ++i) {
      switch (scheme) {
        case SegScheme::word:
          counts[words[i]]++;
          break;
        case SegScheme::bpe:
          for (const auto& p : applier->pieces(words[i])) counts[p]++;
          break;
        case SegScheme::chars:
          if (i > 0) counts[kWordBoundaryToken]++;
          for (const auto& c : utf8_chars(words[i])) counts[c]++;
          break;
      }
    }
  }
  return counts;
}

Vocabulary build_scheme_vocab(const std::vector<std::string>& corpus_lines,
                              SegScheme scheme, int64_t top_k, const MergeTable* merges) {
  auto counts = count_scheme_tokens(corpus_lines, scheme, merges);
  if (scheme == SegScheme::bpe) {
    // character fallback in both plain and continuation form
    for (const auto& line : corpus_lines) {
      for (const auto& w : split_ws(line)) {
        for (const auto& c : utf8_chars(w)) {
          counts.emplace(c, 0);
          counts.emplace(c + "@@", 0);
        }
      }
    }
  }
  return Vocabulary::from_counts(counts, top_k);
}

}  // namespace nrmt
