#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nrmt/rng.hpp"

namespace nrmt {

// Map from a clean surface word to its naturally-noisy variants. Keys are
// pre-segmentation surface forms; no variant equals its key.
class NoiseLexicon {
 public:
  void add(const std::string& clean, const std::vector<std::string>& variants);
  bool has(const std::string& clean) const { return entries_.count(clean) > 0; }
  const std::vector<std::string>& variants(const std::string& clean) const;
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

  void save(const std::string& path) const;
  // File format: one entry per line, whitespace separated, clean word first
  // then at least one variant; '#' starts a comment line. Duplicate keys merge.
  static NoiseLexicon load(const std::string& path);

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

struct PerturbationRecord {
  int64_t sentence;    // index into the corpus
  int64_t word;        // index in the surface tokenization
  std::string clean;
  std::string noisy;
};

void save_records(const std::string& path, const std::vector<PerturbationRecord>& records);
std::vector<PerturbationRecord> load_records(const std::string& path);

struct PerturbResult {
  std::vector<std::string> corpus;          // perturbed surface corpus
  std::vector<PerturbationRecord> records;  // one per touched position
  double achieved_fraction = 0.0;           // vs the unit named by the mode
};

// Training protocol: floor(fraction * N) sentences are drawn uniformly
// without replacement among sentences containing at least one lexicon key;
// each selected sentence has exactly one eligible word replaced by a
// uniformly chosen variant. achieved_fraction is perturbed sentences / N.
PerturbResult perturb_training(const std::vector<std::string>& corpus,
                               const NoiseLexicon& lexicon, double sentence_fraction,
                               uint64_t seed);

// Test protocol: floor(fraction * W) word positions, W counting every surface
// word, drawn uniformly without replacement among eligible positions (word is
// a lexicon key, not yet perturbed). When eligible positions run out first,
// all of them are perturbed and achieved_fraction reports the shortfall.
PerturbResult perturb_test(const std::vector<std::string>& corpus,
                           const NoiseLexicon& lexicon, double word_fraction,
                           uint64_t seed);

}  // namespace nrmt
