#include "nrmt/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

namespace {

void count_ngrams(const std::vector<std::string>& tokens, int n,
                  std::unordered_map<std::string, int64_t>& counts) {
  if (static_cast<int>(tokens.size()) < n) return;
  for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k) key += '\x01';
      key += tokens[i + static_cast<size_t>(k)];
    }
    counts[key]++;
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

BleuResult corpus_bleu(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references, int max_n,
                       bool smoothing) {
  if (hypotheses.size() != references.size()) {
    throw Error(ErrorKind::data, "bleu: corpus length mismatch: " +
                                     std::to_string(hypotheses.size()) + " vs " +
                                     std::to_string(references.size()));
  }
  if (hypotheses.empty()) throw Error(ErrorKind::data, "bleu: empty corpus");
  if (max_n < 1 || max_n > 4) throw Error(ErrorKind::usage, "bleu: max_n must be in 1..4");

  std::array<int64_t, 4> matches{};
  std::array<int64_t, 4> totals{};
  BleuResult res;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = split_ws(hypotheses[i]);
    const auto ref = split_ws(references[i]);
    res.hyp_len += static_cast<int64_t>(hyp.size());
    res.ref_len += static_cast<int64_t>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      std::unordered_map<std::string, int64_t> hyp_counts, ref_counts;
      count_ngrams(hyp, n, hyp_counts);
      count_ngrams(ref, n, ref_counts);
      for (const auto& [gram, c] : hyp_counts) {
        totals[static_cast<size_t>(n - 1)] += c;
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) {
          matches[static_cast<size_t>(n - 1)] += std::min(c, it->second);
        }
      }
    }
  }

  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    const int64_t m = matches[static_cast<size_t>(n - 1)];
    const int64_t d = totals[static_cast<size_t>(n - 1)];
    double p;
    if (m > 0) {
      p = static_cast<double>(m) / static_cast<double>(d);
    } else if (smoothing) {
      p = static_cast<double>(m + 1) / static_cast<double>(d + 1);
    } else if (d == 0) {
      p = 1.0;  // no n-grams of this order exist; neutral factor
    } else {
      p = 0.0;
      zero = true;
    }
    res.precisions[static_cast<size_t>(n - 1)] = p;
    if (p > 0.0) log_sum += std::log(p);
  }
  res.brevity_penalty =
      (res.hyp_len > 0 && res.hyp_len < res.ref_len)
          ? std::exp(1.0 - static_cast<double>(res.ref_len) / static_cast<double>(res.hyp_len))
          : 1.0;
  if (zero || res.hyp_len == 0) {
    res.score = 0.0;
  } else {
    res.score = 100.0 * res.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
  }
  return res;
}

std::string SweepReport::to_tsv() const {
  std::string out = "model\tfraction\tachieved_fraction\tbleu\trel_drop_pct\n";
  for (const auto& r : rows) {
    out += r.model_id + "\t" + fixed(r.fraction, 2) + "\t" + fixed(r.achieved_fraction, 4) +
           "\t" + fixed(r.bleu, 4) + "\t" + fixed(100.0 * r.rel_drop, 2) + "\n";
  }
  return out;
}

std::string SweepReport::to_table() const {
  std::string out;
  std::string header = "model           ";
  // group rows by model, columns by fraction
  std::vector<std::string> models;
  std::vector<double> fractions;
  for (const auto& r : rows) {
    if (std::find(models.begin(), models.end(), r.model_id) == models.end()) {
      models.push_back(r.model_id);
    }
    if (std::find(fractions.begin(), fractions.end(), r.fraction) == fractions.end()) {
      fractions.push_back(r.fraction);
    }
  }
  char buf[64];
  for (double f : fractions) {
    std::snprintf(buf, sizeof(buf), "%14.0f%%", 100.0 * f);
    header += buf;
  }
  out = header + "\n";
  for (const auto& m : models) {
    std::string line = m;
    line.resize(16, ' ');
    for (double f : fractions) {
      for (const auto& r : rows) {
        if (r.model_id == m && r.fraction == f) {
          if (f == 0.0) {
            std::snprintf(buf, sizeof(buf), "%15.2f", r.bleu);
          } else {
            std::snprintf(buf, sizeof(buf), "%8.2f (-%d%%)",
                          r.bleu, static_cast<int>(std::lround(100.0 * r.rel_drop)));
          }
          line += buf;
          break;
        }
      }
    }
    out += line + "\n";
  }
  return out;
}

SweepReport robustness_sweep(Translator& translator,
                             const std::vector<std::string>& test_src,
                             const std::vector<std::string>& test_ref,
                             const NoiseLexicon& lexicon,
                             const std::vector<double>& fractions, uint64_t seed,
                             const std::string& model_id) {
  if (test_src.size() != test_ref.size()) {
    throw Error(ErrorKind::data, "sweep: test corpus sides differ in length");
  }
  if (std::find(fractions.begin(), fractions.end(), 0.0) == fractions.end()) {
    throw Error(ErrorKind::usage, "sweep: fractions must include 0");
  }
  SweepReport report;
  double bleu0 = 0.0;
  for (double f : fractions) {
    const uint64_t row_seed = seed + static_cast<uint64_t>(std::llround(100.0 * f));
    const PerturbResult pert = perturb_test(test_src, lexicon, f, row_seed);
    std::vector<std::string> hyps;
    hyps.reserve(pert.corpus.size());
    for (const auto& line : pert.corpus) hyps.push_back(translator.translate_line(line));
    const BleuResult bleu = corpus_bleu(hyps, test_ref);
    SweepRow row;
    row.model_id = model_id;
    row.fraction = f;
    row.requested_fraction = f;
    row.achieved_fraction = pert.achieved_fraction;
    row.bleu = bleu.score;
    if (f == 0.0) bleu0 = bleu.score;
    report.rows.push_back(row);
  }
  for (auto& row : report.rows) {
    row.rel_drop = bleu0 > 0.0 ? (bleu0 - row.bleu) / bleu0 : 0.0;
  }
  return report;
}

}  // namespace nrmt
