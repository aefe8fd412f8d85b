#include "nrmt/toytask.hpp"

#include <filesystem>
#include <set>

#include "nrmt/error.hpp"
#include "nrmt/rng.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

void ToyTaskSpec::validate() const {
  if (task != "copy" && task != "reverse" && task != "cipher") {
    throw Error(ErrorKind::usage, "unknown toy task: " + task);
  }
  if (vocab_size < 2) throw Error(ErrorKind::usage, "toy vocab_size must be >= 2");
  if (len_min < 1 || len_max < len_min) {
    throw Error(ErrorKind::usage, "toy length range is invalid");
  }
  if (lexicon_words > vocab_size) {
    throw Error(ErrorKind::data, "vocab too small for requested lexicon: " +
                                     std::to_string(lexicon_words) + " entries over " +
                                     std::to_string(vocab_size) + " words");
  }
  if (variants_per_word < 1) throw Error(ErrorKind::usage, "variants_per_word must be >= 1");
}

namespace {

std::string random_word(Rng& rng, int64_t len) {
  std::string w;
  for (int64_t i = 0; i < len; ++i) w += static_cast<char>('a' + rng.below(26));
  return w;
}

// One character-level corruption: substitute, swap, insert or drop.
std::string corrupt(const std::string& word, Rng& rng) {
  std::string w = word;
  const int64_t op = rng.below(word.size() > 3 ? 4 : 3);
  const int64_t n = static_cast<int64_t>(w.size());
  switch (op) {
    case 0: {  // substitute
      const int64_t i = rng.below(n);
      char c;
      do {
        c = static_cast<char>('a' + rng.below(26));
      } while (c == w[static_cast<size_t>(i)]);
      w[static_cast<size_t>(i)] = c;
      break;
    }
    case 1: {  // swap adjacent
      if (n < 2) return corrupt(word, rng);
      const int64_t i = rng.below(n - 1);
      std::swap(w[static_cast<size_t>(i)], w[static_cast<size_t>(i + 1)]);
      break;
    }
    case 2: {  // insert
      const int64_t i = rng.below(n + 1);
      w.insert(static_cast<size_t>(i), 1, static_cast<char>('a' + rng.below(26)));
      break;
    }
    default: {  // drop
      const int64_t i = rng.below(n);
      w.erase(static_cast<size_t>(i), 1);
      break;
    }
  }
  return w;
}

}  // namespace

ToyTask generate_toy_task(const ToyTaskSpec& spec) {
  spec.validate();
  ToyTask task;
  Rng rng(spec.seed);

  std::set<std::string> seen;
  while (static_cast<int64_t>(task.words.size()) < spec.vocab_size) {
    const std::string w = random_word(rng, 4 + rng.below(3));
    if (seen.insert(w).second) task.words.push_back(w);
  }

  // wordwise target mapping
  std::vector<std::string> cipher = task.words;
  if (spec.task == "cipher") {
    Rng crng(derive_seed(spec.seed, 0xC1FE));
    crng.shuffle(cipher);
  }
  auto map_word = [&](const std::string& w) {
    for (size_t i = 0; i < task.words.size(); ++i) {
      if (task.words[i] == w) return cipher[i];
    }
    throw Error(ErrorKind::internal, "toy word lookup failed");
  };

  auto gen_corpus = [&](int64_t n, std::vector<std::string>& src,
                        std::vector<std::string>& tgt) {
    for (int64_t i = 0; i < n; ++i) {
      const int64_t len = spec.len_min + rng.below(spec.len_max - spec.len_min + 1);
      std::vector<std::string> s, t;
      for (int64_t k = 0; k < len; ++k) {
        s.push_back(task.words[static_cast<size_t>(rng.below(spec.vocab_size))]);
      }
      if (spec.task == "reverse") {
        t.assign(s.rbegin(), s.rend());
      } else if (spec.task == "cipher") {
        for (const auto& w : s) t.push_back(map_word(w));
      } else {
        t = s;
      }
      src.push_back(join_ws(s));
      tgt.push_back(join_ws(t));
    }
  };
  gen_corpus(spec.n_train, task.train_src, task.train_tgt);
  gen_corpus(spec.n_dev, task.dev_src, task.dev_tgt);
  gen_corpus(spec.n_test, task.test_src, task.test_tgt);

  const std::set<std::string> clean_set(task.words.begin(), task.words.end());
  Rng lrng(derive_seed(spec.seed, 0x7E51));
  for (int64_t i = 0; i < spec.lexicon_words; ++i) {
    const std::string& clean = task.words[static_cast<size_t>(i)];
    std::vector<std::string> variants;
    std::set<std::string> used;
    int guard = 0;
    while (static_cast<int64_t>(variants.size()) < spec.variants_per_word) {
      if (++guard > 1000) {
        throw Error(ErrorKind::data, "could not derive distinct noisy variants for " + clean);
      }
      const std::string v = corrupt(clean, lrng);
      if (v.empty() || v == clean || clean_set.count(v) || used.count(v)) continue;
      used.insert(v);
      variants.push_back(v);
    }
    task.lexicon.add(clean, variants);
  }
  return task;
}

void write_toy_task(const ToyTask& task, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto p = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  write_lines(p("train.src"), task.train_src);
  write_lines(p("train.tgt"), task.train_tgt);
  write_lines(p("dev.src"), task.dev_src);
  write_lines(p("dev.tgt"), task.dev_tgt);
  write_lines(p("test.src"), task.test_src);
  write_lines(p("test.tgt"), task.test_tgt);
  task.lexicon.save(p("noise_lexicon.tsv"));
}

}  // namespace nrmt
