#include "nrmt/bpe.hpp"

#include <algorithm>
#include <limits>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

namespace {

constexpr char kPairSep = '\x01';

std::string pair_key(const std::string& a, const std::string& b) {
  return a + kPairSep + b;
}

// Merges all non-overlapping occurrences of (left, right), left to right.
void merge_pair_in_word(std::vector<std::string>& symbols, const std::string& left,
                        const std::string& right) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(left + right);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      i += 1;
    }
  }
  symbols = std::move(out);
}

}  // namespace

void MergeTable::save(const std::string& path) const {
  std::vector<std::string> lines;
  lines.reserve(merges.size());
  for (const auto& [l, r] : merges) lines.push_back(l + " " + r);
  write_lines(path, lines);
}

MergeTable MergeTable::load(const std::string& path) {
  MergeTable t;
  const auto lines = read_lines(path);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto parts = split_ws(lines[ln]);
    if (parts.size() != 2) {
      throw Error(ErrorKind::data,
                  path + ":" + std::to_string(ln + 1) + ": expected 'left right'");
    }
    t.merges.emplace_back(parts[0], parts[1]);
  }
  return t;
}

MergeTable learn_bpe(const std::vector<std::string>& corpus_lines, int num_merges) {
  if (num_merges < 0) throw Error(ErrorKind::usage, "learn_bpe: num_merges must be >= 0");
  std::unordered_map<std::string, int64_t> word_counts;
  for (const auto& line : corpus_lines) {
    for (auto& w : split_ws(line)) word_counts[w]++;
  }
  if (word_counts.empty()) throw Error(ErrorKind::data, "learn_bpe: empty corpus");

  struct Entry {
    std::vector<std::string> symbols;
    int64_t count;
  };
  std::vector<Entry> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) words.push_back({utf8_chars(w), c});
  // fixed processing order keeps pair counting independent of map order
  std::sort(words.begin(), words.end(),
            [](const Entry& a, const Entry& b) { return a.symbols < b.symbols; });

  MergeTable table;
  for (int step = 0; step < num_merges; ++step) {
    std::unordered_map<std::string, int64_t> pair_counts;
    for (const auto& e : words) {
      for (size_t i = 0; i + 1 < e.symbols.size(); ++i) {
        pair_counts[pair_key(e.symbols[i], e.symbols[i + 1])] += e.count;
      }
    }
    if (pair_counts.empty()) break;
    // best = highest count, ties by lexicographically smallest pair
    std::string best_key;
    int64_t best_count = -1;
    for (const auto& [key, count] : pair_counts) {
      if (count > best_count || (count == best_count && key < best_key)) {
        best_key = key;
        best_count = count;
      }
    }
    const size_t sep = best_key.find(kPairSep);
    const std::string left = best_key.substr(0, sep);
    const std::string right = best_key.substr(sep + 1);
    for (auto& e : words) merge_pair_in_word(e.symbols, left, right);
    table.merges.emplace_back(left, right);
  }
  return table;
}

BpeApplier::BpeApplier(const MergeTable& table) : table_(table) {
  rank_.reserve(table.merges.size());
  for (size_t i = 0; i < table.merges.size(); ++i) {
    const auto& [l, r] = table.merges[i];
    rank_.emplace(pair_key(l, r), static_cast<int>(i));
  }
}

std::vector<std::string> BpeApplier::segment_uncached(const std::string& word) const {
  if (word.empty()) throw Error(ErrorKind::data, "apply_bpe: empty word");
  std::vector<std::string> symbols = utf8_chars(word);
  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    size_t best_i = 0;
    for (size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_i = i;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const std::string left = symbols[best_i];
    const std::string right = symbols[best_i + 1];
    merge_pair_in_word(symbols, left, right);
  }
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (size_t i = 0; i < symbols.size(); ++i) {
    out.push_back(i + 1 < symbols.size() ? symbols[i] + "@@" : symbols[i]);
  }
  return out;
}

const std::vector<std::string>& BpeApplier::pieces(const std::string& word) {
  auto it = cache_.find(word);
  if (it == cache_.end()) {
    it = cache_.emplace(word, segment_uncached(word)).first;
  }
  return it->second;
}

std::vector<std::string> apply_bpe(const std::string& word, const MergeTable& table) {
  return BpeApplier(table).segment_uncached(word);
}

}  // namespace nrmt
