#include "nrmt.h"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "nrmt/augment.hpp"
#include "nrmt/bleu.hpp"
#include "nrmt/decode.hpp"
#include "nrmt/error.hpp"
#include "nrmt/noise.hpp"
#include "nrmt/text.hpp"
#include "nrmt/toytask.hpp"
#include "nrmt/train.hpp"

#ifndef NRMT_VERSION
#define NRMT_VERSION "0.0.0"
#endif

namespace {

using nlohmann::ordered_json;

thread_local std::string g_last_error;

nrmt_status to_status(nrmt::ErrorKind kind) {
  switch (kind) {
    case nrmt::ErrorKind::usage: return NRMT_EUSAGE;
    case nrmt::ErrorKind::data: return NRMT_EDATA;
    case nrmt::ErrorKind::io: return NRMT_EIO;
    case nrmt::ErrorKind::internal: return NRMT_EINTERNAL;
  }
  return NRMT_EINTERNAL;
}

template <typename Fn>
nrmt_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return NRMT_OK;
  } catch (const nrmt::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NRMT_EINTERNAL;
  }
}

std::string require(const char* value, const char* name) {
  if (value == nullptr || value[0] == '\0') {
    throw nrmt::Error(nrmt::ErrorKind::usage, std::string(name) + " is required");
  }
  return value;
}

std::string opt(const char* value) { return value == nullptr ? "" : value; }

// Run manifest emitted next to every primary artifact: the subcommand, the
// resolved settings, all paths and the seed, so outputs are reproducible.
void write_manifest(const std::string& primary_output, const std::string& subcommand,
                    const ordered_json& config, const ordered_json& inputs,
                    const ordered_json& outputs, uint64_t seed) {
  ordered_json m;
  m["subcommand"] = subcommand;
  m["version"] = NRMT_VERSION;
  m["seed"] = seed;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  nrmt::write_file(primary_output + ".manifest.json", m.dump(2) + "\n");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* nrmt_version(void) { return NRMT_VERSION; }

const char* nrmt_last_error(void) { return g_last_error.c_str(); }

void nrmt_string_free(char* s) { std::free(s); }

nrmt_status nrmt_learn_bpe(const char* corpus_path, int num_merges,
                           const char* out_merges_path) {
  return guarded([&] {
    const std::string corpus = require(corpus_path, "corpus_path");
    const std::string out = require(out_merges_path, "out_merges_path");
    const auto table = nrmt::learn_bpe(nrmt::read_lines(corpus), num_merges);
    table.save(out);
    write_manifest(out, "learn-bpe", {{"num_merges", num_merges}},
                   {{"corpus", corpus}}, {{"merges", out}}, 0);
  });
}

nrmt_status nrmt_build_vocab(const char* corpus_path, const char* scheme, long top_k,
                             const char* merges_path, const char* out_vocab_path) {
  return guarded([&] {
    const std::string corpus = require(corpus_path, "corpus_path");
    const std::string out = require(out_vocab_path, "out_vocab_path");
    const nrmt::SegScheme s = nrmt::seg_scheme_from_string(require(scheme, "scheme"));
    std::optional<nrmt::MergeTable> merges;
    if (s == nrmt::SegScheme::bpe) {
      merges = nrmt::MergeTable::load(require(merges_path, "merges_path"));
    }
    const auto vocab = nrmt::build_scheme_vocab(
        nrmt::read_lines(corpus), s, top_k,
        merges.has_value() ? &merges.value() : nullptr);
    vocab.save(out);
    write_manifest(out, "build-vocab",
                   {{"scheme", scheme}, {"top_k", top_k}, {"merges", opt(merges_path)}},
                   {{"corpus", corpus}}, {{"vocab", out}}, 0);
  });
}

nrmt_status nrmt_perturb(const char* mode, const char* corpus_path,
                         const char* lexicon_path, double fraction,
                         unsigned long long seed, const char* out_corpus_path,
                         const char* out_records_path, double* achieved_fraction) {
  return guarded([&] {
    const std::string m = require(mode, "mode");
    const std::string corpus_file = require(corpus_path, "corpus_path");
    const std::string lexicon_file = require(lexicon_path, "lexicon_path");
    const std::string out = require(out_corpus_path, "out_corpus_path");
    const auto corpus = nrmt::read_lines(corpus_file);
    const auto lexicon = nrmt::NoiseLexicon::load(lexicon_file);
    nrmt::PerturbResult res;
    if (m == "train") {
      res = nrmt::perturb_training(corpus, lexicon, fraction, seed);
    } else if (m == "test") {
      res = nrmt::perturb_test(corpus, lexicon, fraction, seed);
    } else {
      throw nrmt::Error(nrmt::ErrorKind::usage, "perturb mode must be train or test");
    }
    nrmt::write_lines(out, res.corpus);
    ordered_json outputs = {{"corpus", out}};
    if (out_records_path != nullptr && out_records_path[0] != '\0') {
      nrmt::save_records(out_records_path, res.records);
      outputs["records"] = out_records_path;
    }
    if (achieved_fraction != nullptr) *achieved_fraction = res.achieved_fraction;
    write_manifest(out, "perturb",
                   {{"mode", m},
                    {"fraction", fraction},
                    {"achieved_fraction", res.achieved_fraction},
                    {"perturbed", res.records.size()}},
                   {{"corpus", corpus_file}, {"lexicon", lexicon_file}}, outputs, seed);
  });
}

nrmt_status nrmt_augment(const char* mode, const char* src_corpus_path,
                         const char* tgt_corpus_path, const char* records_path,
                         const char* scheme, const char* src_vocab_path,
                         const char* src_merges_path, const char* tgt_merges_path,
                         int with_denoise, const char* out_dataset_path) {
  return guarded([&] {
    const nrmt::AugmentMode m = nrmt::augment_mode_from_string(require(mode, "mode"));
    const std::string src_file = require(src_corpus_path, "src_corpus_path");
    const std::string tgt_file = require(tgt_corpus_path, "tgt_corpus_path");
    const std::string out = require(out_dataset_path, "out_dataset_path");

    nrmt::ModelConfig scheme_probe;
    scheme_probe.scheme = require(scheme, "scheme");
    if (scheme_probe.scheme != "word2bpe" && scheme_probe.scheme != "bpe2bpe" &&
        scheme_probe.scheme != "char2bpe") {
      throw nrmt::Error(nrmt::ErrorKind::usage, "unknown scheme: " + scheme_probe.scheme);
    }
    const nrmt::SegScheme src_scheme = scheme_probe.src_scheme();

    std::optional<nrmt::Vocabulary> src_vocab;
    std::optional<nrmt::MergeTable> src_merges;
    if (src_scheme == nrmt::SegScheme::word) {
      src_vocab = nrmt::Vocabulary::load(require(src_vocab_path, "src_vocab_path"));
    }
    if (src_scheme == nrmt::SegScheme::bpe) {
      src_merges = nrmt::MergeTable::load(require(src_merges_path, "src_merges_path"));
    }
    nrmt::MergeTable tgt_merges =
        nrmt::MergeTable::load(require(tgt_merges_path, "tgt_merges_path"));

    std::vector<nrmt::PerturbationRecord> records;
    if (records_path != nullptr && records_path[0] != '\0') {
      records = nrmt::load_records(records_path);
    }
    nrmt::Segmenter src_seg(src_scheme,
                            src_vocab.has_value() ? &src_vocab.value() : nullptr,
                            src_merges.has_value() ? &src_merges.value() : nullptr);
    nrmt::Segmenter tgt_seg(nrmt::SegScheme::bpe, nullptr, &tgt_merges);
    const auto examples =
        nrmt::build_dataset(nrmt::read_lines(src_file), nrmt::read_lines(tgt_file),
                            records, src_seg, tgt_seg, m, with_denoise != 0);
    nrmt::save_dataset(out, examples);
    write_manifest(out, "augment",
                   {{"mode", mode},
                    {"scheme", scheme},
                    {"with_denoise", with_denoise != 0},
                    {"src_vocab", opt(src_vocab_path)},
                    {"src_merges", opt(src_merges_path)},
                    {"tgt_merges", opt(tgt_merges_path)}},
                   {{"src", src_file}, {"tgt", tgt_file}, {"records", opt(records_path)}},
                   {{"dataset", out}}, 0);
  });
}

nrmt_status nrmt_train(const char* config_path, const char* overrides) {
  return guarded([&] {
    nrmt::KeyValues kv;
    if (config_path != nullptr && config_path[0] != '\0') {
      kv = nrmt::KeyValues::parse(nrmt::read_file(config_path));
    }
    if (overrides != nullptr && overrides[0] != '\0') {
      for (const auto& [k, v] : nrmt::KeyValues::parse(overrides).items) kv.set(k, v);
    }
    const nrmt::TrainSetup setup = nrmt::TrainSetup::from_kv(kv);
    nrmt::Trainer trainer(setup);
    trainer.run();
    if (!setup.train.out_model.empty()) {
      // manifest records the fully resolved settings, not just the file
      const nrmt::TrainSetup resolved{trainer.train_config(), trainer.model_config()};
      ordered_json config;
      for (const auto& [k, v] : resolved.to_kv().items) config[k] = v;
      ordered_json outputs = {{"model", setup.train.out_model}};
      if (!setup.train.log_file.empty()) outputs["log"] = setup.train.log_file;
      write_manifest(setup.train.out_model, "train", config,
                     {{"config_file", opt(config_path)},
                      {"data", setup.train.data},
                      {"clean_data", setup.train.clean_data},
                      {"init_from", setup.train.init_from}},
                     outputs, setup.train.seed);
    }
  });
}

nrmt_status nrmt_gen_toy(const char* task, long vocab_size, long len_min, long len_max,
                         long n_train, long n_dev, long n_test, long lexicon_words,
                         long variants_per_word, unsigned long long seed,
                         const char* out_dir) {
  return guarded([&] {
    nrmt::ToyTaskSpec spec;
    spec.task = require(task, "task");
    spec.vocab_size = vocab_size;
    spec.len_min = len_min;
    spec.len_max = len_max;
    spec.n_train = n_train;
    spec.n_dev = n_dev;
    spec.n_test = n_test;
    spec.lexicon_words = lexicon_words;
    spec.variants_per_word = variants_per_word;
    spec.seed = seed;
    const std::string dir = require(out_dir, "out_dir");
    const nrmt::ToyTask toy = nrmt::generate_toy_task(spec);
    nrmt::write_toy_task(toy, dir);
    write_manifest(dir + "/train.src", "gen-toy",
                   {{"task", spec.task},
                    {"vocab_size", spec.vocab_size},
                    {"len_min", spec.len_min},
                    {"len_max", spec.len_max},
                    {"n_train", spec.n_train},
                    {"n_dev", spec.n_dev},
                    {"n_test", spec.n_test},
                    {"lexicon_words", spec.lexicon_words},
                    {"variants_per_word", spec.variants_per_word}},
                   ordered_json::object(), {{"dir", dir}}, seed);
  });
}

struct nrmt_translator {
  nrmt::Translator impl;
  std::string model_path;
  nrmt::DecodeOptions opts;
};

nrmt_status nrmt_translator_open(const char* model_path, const char* src_vocab_path,
                                 const char* src_merges_path, const char* tgt_vocab_path,
                                 long beam_size, long max_len, double length_penalty,
                                 nrmt_translator** out) {
  return guarded([&] {
    if (out == nullptr) throw nrmt::Error(nrmt::ErrorKind::usage, "out handle is required");
    nrmt::DecodeOptions opts;
    opts.beam_size = beam_size;
    opts.max_len = max_len;
    opts.length_penalty = length_penalty;
    *out = new nrmt_translator{
        nrmt::Translator(require(model_path, "model_path"),
                         require(src_vocab_path, "src_vocab_path"), opt(src_merges_path),
                         require(tgt_vocab_path, "tgt_vocab_path"), opts),
        require(model_path, "model_path"), opts};
  });
}

nrmt_status nrmt_translate_line(nrmt_translator* t, const char* line, char** out_line) {
  return guarded([&] {
    if (t == nullptr || out_line == nullptr) {
      throw nrmt::Error(nrmt::ErrorKind::usage, "translator handle and output are required");
    }
    *out_line = dup_string(t->impl.translate_line(opt(line)));
  });
}

nrmt_status nrmt_translate_file(nrmt_translator* t, const char* in_path,
                                const char* out_path) {
  return guarded([&] {
    if (t == nullptr) throw nrmt::Error(nrmt::ErrorKind::usage, "translator handle is required");
    const std::string in = require(in_path, "in_path");
    const std::string out = require(out_path, "out_path");
    const auto lines = nrmt::read_lines(in);
    std::vector<std::string> results;
    results.reserve(lines.size());
    for (const auto& line : lines) results.push_back(t->impl.translate_line(line));
    nrmt::write_lines(out, results);
    write_manifest(out, "translate",
                   {{"beam_size", t->opts.beam_size},
                    {"max_len", t->opts.max_len},
                    {"length_penalty", t->opts.length_penalty}},
                   {{"model", t->model_path}, {"source", in}}, {{"translation", out}}, 0);
  });
}

void nrmt_translator_close(nrmt_translator* t) { delete t; }

nrmt_status nrmt_bleu(const char* hyp_path, const char* ref_path, int smoothing,
                      const char* out_report_path, double* score) {
  return guarded([&] {
    const std::string hyp = require(hyp_path, "hyp_path");
    const std::string ref = require(ref_path, "ref_path");
    const auto res = nrmt::corpus_bleu(nrmt::read_lines(hyp), nrmt::read_lines(ref), 4,
                                       smoothing != 0);
    if (score != nullptr) *score = res.score;
    if (out_report_path != nullptr && out_report_path[0] != '\0') {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "bleu\t%.4f\nbp\t%.6f\nhyp_len\t%lld\nref_len\t%lld\n"
                    "p1\t%.6f\np2\t%.6f\np3\t%.6f\np4\t%.6f\n",
                    res.score, res.brevity_penalty,
                    static_cast<long long>(res.hyp_len),
                    static_cast<long long>(res.ref_len), res.precisions[0],
                    res.precisions[1], res.precisions[2], res.precisions[3]);
      nrmt::write_file(out_report_path, buf);
      write_manifest(out_report_path, "evaluate", {{"smoothing", smoothing != 0}},
                     {{"hyp", hyp}, {"ref", ref}}, {{"report", out_report_path}}, 0);
    }
  });
}

nrmt_status nrmt_sweep(const char* model_path, const char* src_vocab_path,
                       const char* src_merges_path, const char* tgt_vocab_path,
                       const char* test_src_path, const char* test_ref_path,
                       const char* lexicon_path, const char* fractions_csv,
                       unsigned long long seed, long beam_size, long max_len,
                       double length_penalty, const char* model_id,
                       const char* out_report_path, int with_table) {
  return guarded([&] {
    nrmt::DecodeOptions opts;
    opts.beam_size = beam_size;
    opts.max_len = max_len;
    opts.length_penalty = length_penalty;
    nrmt::Translator tr(require(model_path, "model_path"),
                        require(src_vocab_path, "src_vocab_path"), opt(src_merges_path),
                        require(tgt_vocab_path, "tgt_vocab_path"), opts);
    std::vector<double> fractions;
    std::stringstream ss(require(fractions_csv, "fractions_csv"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) fractions.push_back(std::stod(item));
    }
    const std::string out = require(out_report_path, "out_report_path");
    const auto report = nrmt::robustness_sweep(
        tr, nrmt::read_lines(require(test_src_path, "test_src_path")),
        nrmt::read_lines(require(test_ref_path, "test_ref_path")),
        nrmt::NoiseLexicon::load(require(lexicon_path, "lexicon_path")), fractions, seed,
        model_id != nullptr && model_id[0] != '\0' ? model_id : "model");
    nrmt::write_file(out, report.to_tsv());
    ordered_json outputs = {{"report", out}};
    if (with_table != 0) {
      nrmt::write_file(out + ".table.txt", report.to_table());
      outputs["table"] = out + ".table.txt";
    }
    write_manifest(out, "sweep",
                   {{"fractions", fractions_csv},
                    {"beam_size", beam_size},
                    {"max_len", max_len},
                    {"length_penalty", length_penalty},
                    {"model_id", opt(model_id)}},
                   {{"model", model_path},
                    {"test_src", test_src_path},
                    {"test_ref", test_ref_path},
                    {"lexicon", lexicon_path}},
                   outputs, seed);
  });
}

}  // extern "C"
