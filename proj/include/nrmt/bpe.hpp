#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace nrmt {

// Ordered byte-pair merge rules; application order equals learned order.
struct MergeTable {
  std::vector<std::pair<std::string, std::string>> merges;

  void save(const std::string& path) const;
  static MergeTable load(const std::string& path);
};

// Greedy highest-frequency pair learning over a whitespace-tokenized corpus.
// Frequency ties are broken by lexicographic order of the pair, so the result
// is deterministic. Words are treated as plain code-point sequences and
// continuation markers are attached only at application time.
MergeTable learn_bpe(const std::vector<std::string>& corpus_lines, int num_merges);

// Segments one word; non-final pieces carry the "@@" suffix and concatenating
// the pieces without markers reproduces the word.
std::vector<std::string> apply_bpe(const std::string& word, const MergeTable& table);

// Word-level cache for corpus-scale application.
class BpeApplier {
 public:
  explicit BpeApplier(const MergeTable& table);
  const std::vector<std::string>& pieces(const std::string& word);

 private:
  const MergeTable& table_;
  std::unordered_map<std::string, int> rank_;
  std::unordered_map<std::string, std::vector<std::string>> cache_;

  friend std::vector<std::string> apply_bpe(const std::string&, const MergeTable&);
  std::vector<std::string> segment_uncached(const std::string& word) const;
};

}  // namespace nrmt
