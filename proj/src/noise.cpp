#include "nrmt/noise.hpp"

#include <algorithm>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

void NoiseLexicon::add(const std::string& clean, const std::vector<std::string>& variants) {
  if (variants.empty()) {
    throw Error(ErrorKind::data, "lexicon entry without variants: " + clean);
  }
  auto& dst = entries_[clean];
  for (const auto& v : variants) {
    if (v == clean) {
      throw Error(ErrorKind::data, "lexicon variant equals its clean form: " + clean);
    }
    if (std::find(dst.begin(), dst.end(), v) == dst.end()) dst.push_back(v);
  }
}

const std::vector<std::string>& NoiseLexicon::variants(const std::string& clean) const {
  const auto it = entries_.find(clean);
  if (it == entries_.end()) {
    throw Error(ErrorKind::data, "word not in noise lexicon: " + clean);
  }
  return it->second;
}

void NoiseLexicon::save(const std::string& path) const {
  std::vector<std::string> lines;
  lines.reserve(entries_.size());
  for (const auto& [clean, vars] : entries_) {
    lines.push_back(clean + " " + join_ws(vars));
  }
  write_lines(path, lines);
}

NoiseLexicon NoiseLexicon::load(const std::string& path) {
  NoiseLexicon lex;
  const auto lines = read_lines(path);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    const auto& line = lines[ln];
    if (line.empty() || line[0] == '#') continue;
    const auto parts = split_ws(line);
    if (parts.empty()) continue;
    if (parts.size() < 2) {
      throw Error(ErrorKind::data,
                  path + ":" + std::to_string(ln + 1) + ": entry has no variants");
    }
    try {
      lex.add(parts[0], {parts.begin() + 1, parts.end()});
    } catch (const Error& e) {
      throw Error(ErrorKind::data, path + ":" + std::to_string(ln + 1) + ": " + e.what());
    }
  }
  return lex;
}

void save_records(const std::string& path, const std::vector<PerturbationRecord>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    lines.push_back(std::to_string(r.sentence) + "\t" + std::to_string(r.word) + "\t" +
                    r.clean + "\t" + r.noisy);
  }
  write_lines(path, lines);
}

std::vector<PerturbationRecord> load_records(const std::string& path) {
  std::vector<PerturbationRecord> out;
  const auto lines = read_lines(path);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    std::vector<std::string> parts;
    size_t start = 0;
    for (size_t i = 0; i <= lines[ln].size(); ++i) {
      if (i == lines[ln].size() || lines[ln][i] == '\t') {
        parts.push_back(lines[ln].substr(start, i - start));
        start = i + 1;
      }
    }
    if (parts.size() != 4) {
      throw Error(ErrorKind::data, path + ":" + std::to_string(ln + 1) +
                                       ": expected sentence<TAB>word<TAB>clean<TAB>noisy");
    }
    out.push_back({std::stoll(parts[0]), std::stoll(parts[1]), parts[2], parts[3]});
  }
  return out;
}

namespace {

void check_fraction(double f) {
  if (!(f >= 0.0 && f <= 1.0)) {
    throw Error(ErrorKind::usage, "fraction must be in [0, 1], got " + std::to_string(f));
  }
}

std::vector<int64_t> eligible_words(const std::vector<std::string>& words,
                                    const NoiseLexicon& lexicon) {
  std::vector<int64_t> out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (lexicon.has(words[i])) out.push_back(static_cast<int64_t>(i));
  }
  return out;
}

}  // namespace

PerturbResult perturb_training(const std::vector<std::string>& corpus,
                               const NoiseLexicon& lexicon, double sentence_fraction,
                               uint64_t seed) {
  check_fraction(sentence_fraction);
  PerturbResult res;
  res.corpus = corpus;

  std::vector<std::vector<std::string>> tokenized(corpus.size());
  std::vector<int64_t> eligible;
  for (size_t i = 0; i < corpus.size(); ++i) {
    tokenized[i] = split_ws(corpus[i]);
    if (!eligible_words(tokenized[i], lexicon).empty()) {
      eligible.push_back(static_cast<int64_t>(i));
    }
  }

  const int64_t target =
      static_cast<int64_t>(sentence_fraction * static_cast<double>(corpus.size()));
  const int64_t k = std::min<int64_t>(target, static_cast<int64_t>(eligible.size()));
  Rng rng(seed);
  auto picks = rng.sample_without_replacement(static_cast<int64_t>(eligible.size()), k);
  std::sort(picks.begin(), picks.end());

  for (int64_t p : picks) {
    const int64_t s = eligible[static_cast<size_t>(p)];
    auto& words = tokenized[static_cast<size_t>(s)];
    const auto positions = eligible_words(words, lexicon);
    const int64_t w = positions[static_cast<size_t>(rng.below(
        static_cast<int64_t>(positions.size())))];
    const std::string clean = words[static_cast<size_t>(w)];
    const auto& vars = lexicon.variants(clean);
    const std::string noisy =
        vars[static_cast<size_t>(rng.below(static_cast<int64_t>(vars.size())))];
    words[static_cast<size_t>(w)] = noisy;
    res.corpus[static_cast<size_t>(s)] = join_ws(words);
    res.records.push_back({s, w, clean, noisy});
  }
  res.achieved_fraction =
      corpus.empty() ? 0.0
                     : static_cast<double>(res.records.size()) /
                           static_cast<double>(corpus.size());
  return res;
}

PerturbResult perturb_test(const std::vector<std::string>& corpus,
                           const NoiseLexicon& lexicon, double word_fraction,
                           uint64_t seed) {
  check_fraction(word_fraction);
  PerturbResult res;
  res.corpus = corpus;

  std::vector<std::vector<std::string>> tokenized(corpus.size());
  std::vector<std::pair<int64_t, int64_t>> eligible;  // (sentence, word)
  int64_t total_words = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    tokenized[i] = split_ws(corpus[i]);
    total_words += static_cast<int64_t>(tokenized[i].size());
    for (int64_t w : eligible_words(tokenized[i], lexicon)) {
      eligible.emplace_back(static_cast<int64_t>(i), w);
    }
  }

  const int64_t target = static_cast<int64_t>(word_fraction * static_cast<double>(total_words));
  const int64_t k = std::min<int64_t>(target, static_cast<int64_t>(eligible.size()));
  Rng rng(seed);
  auto picks = rng.sample_without_replacement(static_cast<int64_t>(eligible.size()), k);
  std::sort(picks.begin(), picks.end());

  std::vector<bool> touched(corpus.size(), false);
  for (int64_t p : picks) {
    const auto [s, w] = eligible[static_cast<size_t>(p)];
    auto& words = tokenized[static_cast<size_t>(s)];
    const std::string clean = words[static_cast<size_t>(w)];
    const auto& vars = lexicon.variants(clean);
    const std::string noisy =
        vars[static_cast<size_t>(rng.below(static_cast<int64_t>(vars.size())))];
    words[static_cast<size_t>(w)] = noisy;
    touched[static_cast<size_t>(s)] = true;
    res.records.push_back({s, w, clean, noisy});
  }
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (touched[i]) res.corpus[i] = join_ws(tokenized[i]);
  }
  std::sort(res.records.begin(), res.records.end(),
            [](const PerturbationRecord& a, const PerturbationRecord& b) {
              return a.sentence != b.sentence ? a.sentence < b.sentence : a.word < b.word;
            });
  res.achieved_fraction =
      total_words == 0 ? 0.0
                       : static_cast<double>(res.records.size()) /
                             static_cast<double>(total_words);
  return res;
}

}  // namespace nrmt
