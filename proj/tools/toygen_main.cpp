// Generates the self-contained toy translation task and noise lexicon.
#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "nrmt.h"

int main(int argc, char** argv) {
  CLI::App app{"nrmt-toygen - deterministic toy task generator"};
  std::string task = "cipher", out_dir;
  long vocab_size = 40, len_min = 3, len_max = 8;
  long n_train = 800, n_dev = 100, n_test = 200;
  long lexicon_words = 40, variants = 2;
  unsigned long long seed = 1;
  app.add_option("--task", task, "copy | reverse | cipher");
  app.add_option("--vocab-size", vocab_size, "Number of distinct words");
  app.add_option("--len-min", len_min, "Minimum sentence length");
  app.add_option("--len-max", len_max, "Maximum sentence length");
  app.add_option("--train", n_train, "Training sentences");
  app.add_option("--dev", n_dev, "Development sentences");
  app.add_option("--test", n_test, "Test sentences");
  app.add_option("--lexicon-words", lexicon_words, "Words with noisy variants");
  app.add_option("--variants", variants, "Noisy variants per word");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nrun with --help for usage\n";
    return 1;
  }

  const nrmt_status st =
      nrmt_gen_toy(task.c_str(), vocab_size, len_min, len_max, n_train, n_dev, n_test,
                   lexicon_words, variants, seed, out_dir.c_str());
  if (st != NRMT_OK) {
    std::cerr << "error: " << nrmt_last_error() << "\n";
    return st == NRMT_EUSAGE ? 1 : 2;
  }
  return 0;
}
