// Command-line front end. Links only the public C API.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "nrmt.h"

namespace {

int report(nrmt_status status) {
  if (status == NRMT_OK) return 0;
  std::cerr << "error: " << nrmt_last_error() << "\n";
  return status == NRMT_EUSAGE ? 1 : 2;
}

std::string join_overrides(const std::vector<std::string>& sets) {
  std::string out;
  for (const auto& s : sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos) {
      out += s + " = true\n";
    } else {
      out += s.substr(0, eq) + " = " + s.substr(eq + 1) + "\n";
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nrmt - noise-robust toy machine translation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nrmt_version()));

  int exit_code = 0;

  // learn-bpe
  std::string lb_corpus, lb_out;
  int lb_merges = 500;
  auto* learn = app.add_subcommand("learn-bpe", "Learn byte-pair merges from a corpus");
  learn->add_option("--corpus", lb_corpus, "Whitespace-tokenized text file")->required();
  learn->add_option("--merges", lb_merges, "Number of merge operations");
  learn->add_option("--out", lb_out, "Output merge table")->required();
  learn->callback([&] {
    exit_code = report(nrmt_learn_bpe(lb_corpus.c_str(), lb_merges, lb_out.c_str()));
  });

  // build-vocab
  std::string bv_corpus, bv_scheme = "bpe", bv_merges, bv_out;
  long bv_topk = 0;
  auto* bvocab = app.add_subcommand("build-vocab", "Build a token vocabulary");
  bvocab->add_option("--corpus", bv_corpus, "Corpus file")->required();
  bvocab->add_option("--scheme", bv_scheme, "word | bpe | char");
  bvocab->add_option("--top-k", bv_topk, "Keep only the k most frequent tokens");
  bvocab->add_option("--merges", bv_merges, "Merge table (bpe scheme)");
  bvocab->add_option("--out", bv_out, "Output vocab file")->required();
  bvocab->callback([&] {
    exit_code = report(nrmt_build_vocab(bv_corpus.c_str(), bv_scheme.c_str(), bv_topk,
                                        bv_merges.empty() ? nullptr : bv_merges.c_str(),
                                        bv_out.c_str()));
  });

  // perturb
  std::string pt_mode = "train", pt_corpus, pt_lexicon, pt_out, pt_records;
  double pt_fraction = 0.5;
  unsigned long long pt_seed = 1;
  auto* perturb = app.add_subcommand("perturb", "Inject natural noise into a corpus");
  perturb->add_option("--mode", pt_mode, "train (sentence fraction) | test (word fraction)");
  perturb->add_option("--corpus", pt_corpus, "Surface-tokenized source corpus")->required();
  perturb->add_option("--lexicon", pt_lexicon, "Noise lexicon file")->required();
  perturb->add_option("--fraction", pt_fraction, "Fraction to perturb");
  perturb->add_option("--seed", pt_seed, "Random seed");
  perturb->add_option("--out", pt_out, "Perturbed corpus output")->required();
  perturb->add_option("--records", pt_records, "Perturbation record output");
  perturb->callback([&] {
    double achieved = 0.0;
    const nrmt_status st = nrmt_perturb(
        pt_mode.c_str(), pt_corpus.c_str(), pt_lexicon.c_str(), pt_fraction, pt_seed,
        pt_out.c_str(), pt_records.empty() ? nullptr : pt_records.c_str(), &achieved);
    if (st == NRMT_OK) {
      std::printf("achieved_fraction\t%.4f\n", achieved);
    }
    exit_code = report(st);
  });

  // augment
  std::string ag_mode = "ft", ag_src, ag_tgt, ag_records, ag_scheme = "bpe2bpe";
  std::string ag_src_vocab, ag_src_merges, ag_tgt_merges, ag_out;
  bool ag_denoise = false;
  auto* augment = app.add_subcommand("augment", "Build an FT or TAFT training dataset");
  augment->add_option("--mode", ag_mode, "ft | taft");
  augment->add_option("--src", ag_src, "Source corpus (possibly perturbed)")->required();
  augment->add_option("--tgt", ag_tgt, "Target corpus (clean)")->required();
  augment->add_option("--records", ag_records, "Perturbation records");
  augment->add_option("--scheme", ag_scheme, "word2bpe | bpe2bpe | char2bpe");
  augment->add_option("--src-vocab", ag_src_vocab, "Source vocab (word2bpe)");
  augment->add_option("--src-merges", ag_src_merges, "Source merges (bpe2bpe)");
  augment->add_option("--tgt-merges", ag_tgt_merges, "Target merges")->required();
  augment->add_flag("--denoise-targets", ag_denoise, "Emit the denoise column (for dcd)");
  augment->add_option("--out", ag_out, "Output dataset file")->required();
  augment->callback([&] {
    exit_code = report(nrmt_augment(
        ag_mode.c_str(), ag_src.c_str(), ag_tgt.c_str(),
        ag_records.empty() ? nullptr : ag_records.c_str(), ag_scheme.c_str(),
        ag_src_vocab.empty() ? nullptr : ag_src_vocab.c_str(),
        ag_src_merges.empty() ? nullptr : ag_src_merges.c_str(), ag_tgt_merges.c_str(),
        ag_denoise ? 1 : 0, ag_out.c_str()));
  });

  // train
  std::string tr_config;
  std::vector<std::string> tr_sets;
  auto* train = app.add_subcommand("train", "Run a training job from a config file");
  train->add_option("--config", tr_config, "key = value config file");
  train->add_option("--set", tr_sets,
                    "Override or add any config key, e.g. --set regime=cd")
      ->take_all();
  train->callback([&] {
    const std::string overrides = join_overrides(tr_sets);
    exit_code = report(nrmt_train(tr_config.empty() ? nullptr : tr_config.c_str(),
                                  overrides.empty() ? nullptr : overrides.c_str()));
  });

  // translate
  std::string ts_model, ts_src_vocab, ts_src_merges, ts_tgt_vocab, ts_in, ts_out;
  long ts_beam = 4, ts_max_len = 0;
  double ts_lp = 0.6;
  auto* translate = app.add_subcommand("translate", "Decode tokenized sentences");
  translate->add_option("--model", ts_model, "Checkpoint file")->required();
  translate->add_option("--src-vocab", ts_src_vocab, "Source vocab")->required();
  translate->add_option("--src-merges", ts_src_merges, "Source merges (bpe2bpe)");
  translate->add_option("--tgt-vocab", ts_tgt_vocab, "Target vocab")->required();
  translate->add_option("--in", ts_in, "Input file; default stdin");
  translate->add_option("--out", ts_out, "Output file; default stdout");
  translate->add_option("--beam", ts_beam, "Beam size");
  translate->add_option("--max-len", ts_max_len, "Decoding length limit");
  translate->add_option("--length-penalty", ts_lp, "Length penalty exponent");
  translate->callback([&] {
    nrmt_translator* handle = nullptr;
    nrmt_status st = nrmt_translator_open(
        ts_model.c_str(), ts_src_vocab.c_str(),
        ts_src_merges.empty() ? nullptr : ts_src_merges.c_str(), ts_tgt_vocab.c_str(),
        ts_beam, ts_max_len, ts_lp, &handle);
    if (st == NRMT_OK) {
      if (!ts_in.empty() && !ts_out.empty()) {
        st = nrmt_translate_file(handle, ts_in.c_str(), ts_out.c_str());
      } else {
        std::string line;
        while (std::getline(std::cin, line)) {
          char* out = nullptr;
          st = nrmt_translate_line(handle, line.c_str(), &out);
          if (st != NRMT_OK) break;
          std::cout << out << "\n";
          nrmt_string_free(out);
        }
      }
      nrmt_translator_close(handle);
    }
    exit_code = report(st);
  });

  // evaluate
  std::string ev_hyp, ev_ref, ev_out;
  bool ev_no_smoothing = false;
  auto* evaluate = app.add_subcommand("evaluate", "Corpus BLEU of a translation");
  evaluate->add_option("--hyp", ev_hyp, "Hypothesis file")->required();
  evaluate->add_option("--ref", ev_ref, "Reference file")->required();
  evaluate->add_flag("--no-smoothing", ev_no_smoothing, "Disable add-one smoothing");
  evaluate->add_option("--out", ev_out, "Optional report file");
  evaluate->callback([&] {
    double score = 0.0;
    const nrmt_status st =
        nrmt_bleu(ev_hyp.c_str(), ev_ref.c_str(), ev_no_smoothing ? 0 : 1,
                  ev_out.empty() ? nullptr : ev_out.c_str(), &score);
    if (st == NRMT_OK) std::printf("BLEU\t%.4f\n", score);
    exit_code = report(st);
  });

  // sweep
  std::string sw_model, sw_src_vocab, sw_src_merges, sw_tgt_vocab;
  std::string sw_test_src, sw_test_ref, sw_lexicon, sw_fractions = "0,0.05,0.1,0.2,0.3";
  std::string sw_id = "model", sw_out;
  unsigned long long sw_seed = 1;
  long sw_beam = 4, sw_max_len = 0;
  double sw_lp = 0.6;
  bool sw_table = false;
  auto* sweep = app.add_subcommand("sweep", "BLEU vs noise-fraction robustness sweep");
  sweep->add_option("--model", sw_model, "Checkpoint file")->required();
  sweep->add_option("--src-vocab", sw_src_vocab, "Source vocab")->required();
  sweep->add_option("--src-merges", sw_src_merges, "Source merges (bpe2bpe)");
  sweep->add_option("--tgt-vocab", sw_tgt_vocab, "Target vocab")->required();
  sweep->add_option("--test-src", sw_test_src, "Clean test source")->required();
  sweep->add_option("--test-ref", sw_test_ref, "Test reference")->required();
  sweep->add_option("--lexicon", sw_lexicon, "Noise lexicon")->required();
  sweep->add_option("--fractions", sw_fractions, "Comma list including 0");
  sweep->add_option("--seed", sw_seed, "Base seed (per-row seeds derive from it)");
  sweep->add_option("--beam", sw_beam, "Beam size");
  sweep->add_option("--max-len", sw_max_len, "Decoding length limit");
  sweep->add_option("--length-penalty", sw_lp, "Length penalty exponent");
  sweep->add_option("--model-id", sw_id, "Row label in the report");
  sweep->add_flag("--table", sw_table, "Also write an aligned plain-text table");
  sweep->add_option("--out", sw_out, "Report TSV output")->required();
  sweep->callback([&] {
    exit_code = report(nrmt_sweep(
        sw_model.c_str(), sw_src_vocab.c_str(),
        sw_src_merges.empty() ? nullptr : sw_src_merges.c_str(), sw_tgt_vocab.c_str(),
        sw_test_src.c_str(), sw_test_ref.c_str(), sw_lexicon.c_str(),
        sw_fractions.c_str(), sw_seed, sw_beam, sw_max_len, sw_lp, sw_id.c_str(),
        sw_out.c_str(), sw_table ? 1 : 0));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 1;
  }
  return exit_code;
}
