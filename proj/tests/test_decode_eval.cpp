#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "nrmt/bleu.hpp"
#include "nrmt/decode.hpp"
#include "nrmt/error.hpp"
#include "nrmt/rng.hpp"
#include "nrmt/text.hpp"
#include "nrmt/toytask.hpp"

using namespace nrmt;

namespace {

namespace fs = std::filesystem;

ModelConfig tiny_config(bool dual_head = false) {
  ModelConfig cfg;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 2;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.dropout = 0.0;
  cfg.max_seq_len = 16;
  cfg.use_rep = true;
  cfg.dual_head = dual_head;
  cfg.src_vocab_size = 18;
  cfg.tgt_vocab_size = 18;
  return cfg;
}

// Reference greedy decoder written independently of the beam machinery.
std::vector<int64_t> greedy_reference(const std::vector<int64_t>& src, const ModelConfig& cfg,
                                      const ParamMap& params, int64_t max_len) {
  const EncoderOutput enc = encode(src, cfg, params);
  std::vector<int64_t> out;
  for (int64_t step = 0; step < max_len; ++step) {
    std::vector<int64_t> prefix = {Vocabulary::kBos};
    prefix.insert(prefix.end(), out.begin(), out.end());
    const Tensor logits = decode_forward(prefix, enc, cfg, params);
    const int64_t row = logits.shape[0] - 1;
    int64_t best = -1;
    double best_v = -1e300;
    for (int64_t v = 0; v < logits.shape[1]; ++v) {
      if (v == Vocabulary::kPad || v == Vocabulary::kBos || v == Vocabulary::kRep) continue;
      if (logits.at({row, v}) > best_v) {
        best_v = logits.at({row, v});
        best = v;
      }
    }
    if (best == Vocabulary::kEos || best == Vocabulary::kSep) break;
    out.push_back(best);
  }
  return out;
}

}  // namespace

TEST_CASE("beam size one reproduces greedy decoding") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const ModelConfig cfg = tiny_config();
    const ParamMap params = init_model(cfg, derive_seed(1000, seed));
    Rng rng(seed);
    std::vector<int64_t> src;
    for (int i = 0; i < 5; ++i) src.push_back(6 + rng.below(10));
    DecodeOptions opts;
    opts.beam_size = 1;
    opts.max_len = 10;
    const auto beam = translate_ids(src, cfg, params, opts);
    const auto greedy = greedy_reference(src, cfg, params, 10);
    CHECK(beam == greedy);
  }
}

TEST_CASE("the greedy hypothesis appears among beam candidates at every step") {
  const ModelConfig cfg = tiny_config();
  const ParamMap params = init_model(cfg, 77);
  const std::vector<int64_t> src = {6, 9, 12, 7};
  const auto greedy = greedy_reference(src, cfg, params, 8);

  DecodeOptions opts;
  opts.beam_size = 4;
  opts.max_len = 8;
  DecodeTrace trace;
  translate_ids(src, cfg, params, opts, &trace);
  for (size_t step = 0; step < trace.step_candidates.size() && step < greedy.size(); ++step) {
    const std::vector<int64_t> greedy_prefix(greedy.begin(),
                                             greedy.begin() + static_cast<int64_t>(step) + 1);
    bool found = false;
    for (const auto& cand : trace.step_candidates[step]) {
      if (cand == greedy_prefix) found = true;
    }
    CHECK(found);
  }
}

TEST_CASE("empty source yields empty output, not an error") {
  const ModelConfig cfg = tiny_config();
  const ParamMap params = init_model(cfg, 3);
  DecodeOptions opts;
  CHECK(translate_ids({}, cfg, params, opts).empty());
}

TEST_CASE("outputs never contain pad, bos, rep or sep and respect max_len") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const ModelConfig cfg = tiny_config();
    const ParamMap params = init_model(cfg, derive_seed(2000, seed));
    Rng rng(seed);
    std::vector<int64_t> src;
    for (int i = 0; i < 4; ++i) src.push_back(6 + rng.below(10));
    DecodeOptions opts;
    opts.beam_size = 3;
    opts.max_len = 5;
    const auto out = translate_ids(src, cfg, params, opts);
    CHECK(static_cast<int64_t>(out.size()) <= 5);
    for (int64_t id : out) {
      CHECK(id != Vocabulary::kPad);
      CHECK(id != Vocabulary::kBos);
      CHECK(id != Vocabulary::kRep);
      CHECK(id != Vocabulary::kSep);
    }
  }
}

TEST_CASE("translator joins continuation markers and survives checkpoint stripping") {
  // toy checkpoint + vocab files on disk
  const fs::path dir = fs::temp_directory_path() / "nrmt_translator_test";
  fs::create_directories(dir);
  Vocabulary sv, tv;
  for (const char* w : {"rot", "blau", "gelb", "gruen"}) sv.add(w);
  for (const char* w : {"rot", "blau", "gel@@", "b", "gruen"}) tv.add(w);
  sv.save((dir / "src.vocab").string());
  tv.save((dir / "tgt.vocab").string());

  ModelConfig cfg = tiny_config(true);
  cfg.scheme = "word2bpe";
  cfg.src_vocab_size = sv.size();
  cfg.tgt_vocab_size = tv.size();
  Checkpoint ck;
  ck.config = cfg;
  ck.params = init_model(cfg, 11);
  // bundle a fake frozen auxiliary encoder as a CD checkpoint would
  for (const auto& [name, t] : ck.params) {
    if (name == "src_emb" || name.rfind("enc.", 0) == 0) {
      ck.params.emplace("aux." + name, t);
    }
  }
  ck.save((dir / "full.nfck").string());

  Checkpoint stripped = ck;
  stripped.params = strip_params(ck.params, "aux.");
  stripped.params = strip_params(stripped.params, "dn");
  stripped.config.dual_head = false;
  stripped.save((dir / "stripped.nfck").string());

  DecodeOptions opts;
  opts.beam_size = 2;
  opts.max_len = 8;
  Translator full((dir / "full.nfck").string(), (dir / "src.vocab").string(), "",
                  (dir / "tgt.vocab").string(), opts);
  Translator lean((dir / "stripped.nfck").string(), (dir / "src.vocab").string(), "",
                  (dir / "tgt.vocab").string(), opts);
  for (const char* line : {"rot blau gelb", "gruen gruen", ""}) {
    CHECK(full.translate_line(line) == lean.translate_line(line));
  }
  // detokenization of continuation markers
  const std::vector<std::string> pieces = {"gel@@", "b"};
  CHECK(detokenize(pieces, SegScheme::bpe) == "gelb");
  fs::remove_all(dir);
}

TEST_CASE("identical corpora score exactly one hundred") {
  const std::vector<std::string> corpus = {"der wald ist gross", "es regnet", "a b c d e"};
  const auto res = corpus_bleu(corpus, corpus);
  CHECK(res.score == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("zero unigram overlap without smoothing scores zero") {
  const auto res = corpus_bleu({"a b c"}, {"x y z"}, 4, false);
  CHECK(res.score == 0.0);
}

TEST_CASE("the pinned hand-computed example scores 71.65") {
  // precisions 3/3, 2/2, 1/1; no 4-grams; bp = exp(1 - 4/3)
  const auto res = corpus_bleu({"the cat sat"}, {"the cat sat down"});
  CHECK(res.score == doctest::Approx(100.0 * std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-6));
  CHECK(res.score == doctest::Approx(71.65).epsilon(1e-3));
  CHECK(res.precisions[0] == doctest::Approx(1.0));
  CHECK(res.precisions[3] == doctest::Approx(1.0));  // neutral factor
  CHECK(res.brevity_penalty == doctest::Approx(std::exp(-1.0 / 3.0)));
}

TEST_CASE("bleu is invariant under corpus order permutation") {
  Rng rng(5);
  std::vector<std::string> hyps, refs;
  const char* words[] = {"rot", "blau", "gelb", "gruen", "weiss"};
  for (int i = 0; i < 100; ++i) {
    std::string h, r;
    for (int k = 0; k < 4 + static_cast<int>(rng.below(4)); ++k) {
      h += (k ? " " : "") + std::string(words[rng.below(5)]);
      r += (k ? " " : "") + std::string(words[rng.below(5)]);
    }
    hyps.push_back(h);
    refs.push_back(r);
  }
  const double base = corpus_bleu(hyps, refs).score;
  std::vector<size_t> perm(hyps.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::string> h2, r2;
  for (size_t i : perm) {
    h2.push_back(hyps[i]);
    r2.push_back(refs[i]);
  }
  CHECK(corpus_bleu(h2, r2).score == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("bleu rejects mismatched and empty corpora") {
  CHECK_THROWS_AS(corpus_bleu({"a"}, {"a", "b"}), Error);
  CHECK_THROWS_AS(corpus_bleu({}, {}), Error);
}

TEST_CASE("bleu of one hundred implies token-identical corpora") {
  // near-identical corpora stay below 100
  const auto res = corpus_bleu({"a b c d"}, {"a b c e"});
  CHECK(res.score < 100.0);
}

TEST_CASE("robustness sweep: fraction zero row equals plain bleu, bytes reproduce") {
  const fs::path dir = fs::temp_directory_path() / "nrmt_sweep_test";
  fs::create_directories(dir);
  ToyTaskSpec spec;
  spec.task = "copy";
  spec.vocab_size = 12;
  spec.n_train = 10;
  spec.n_dev = 2;
  spec.n_test = 12;
  spec.lexicon_words = 12;
  spec.seed = 9;
  const ToyTask toy = generate_toy_task(spec);

  Vocabulary sv, tv;
  for (const auto& w : toy.words) {
    sv.add(w);
    tv.add(w);
  }
  // noisy variants enter the source vocab so unseen forms become unk only
  // through the word scheme, which is what the sweep should exercise
  sv.save((dir / "src.vocab").string());
  tv.save((dir / "tgt.vocab").string());

  ModelConfig cfg = tiny_config();
  cfg.scheme = "word2bpe";
  cfg.src_vocab_size = sv.size();
  cfg.tgt_vocab_size = tv.size();
  Checkpoint ck;
  ck.config = cfg;
  ck.params = init_model(cfg, 21);
  ck.save((dir / "model.nfck").string());

  DecodeOptions opts;
  opts.beam_size = 1;
  opts.max_len = 10;
  Translator tr((dir / "model.nfck").string(), (dir / "src.vocab").string(), "",
                (dir / "tgt.vocab").string(), opts);

  std::vector<std::string> hyps;
  for (const auto& line : toy.test_src) hyps.push_back(tr.translate_line(line));
  const double plain = corpus_bleu(hyps, toy.test_tgt).score;

  const auto rep = robustness_sweep(tr, toy.test_src, toy.test_tgt, toy.lexicon,
                                    {0.0, 0.2}, 33, "toy");
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].bleu == doctest::Approx(plain).epsilon(1e-12));
  CHECK(rep.rows[0].rel_drop == 0.0);

  const auto rep2 = robustness_sweep(tr, toy.test_src, toy.test_tgt, toy.lexicon,
                                     {0.0, 0.2}, 33, "toy");
  CHECK(rep.to_tsv() == rep2.to_tsv());

  CHECK_THROWS_AS(
      robustness_sweep(tr, toy.test_src, toy.test_tgt, toy.lexicon, {0.1}, 1, "x"), Error);
  fs::remove_all(dir);
}
