#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "nrmt/checkpoint.hpp"
#include "nrmt/error.hpp"
#include "nrmt/text.hpp"
#include "nrmt/train.hpp"

using namespace nrmt;

namespace {

namespace fs = std::filesystem;

struct TinyTask {
  fs::path dir;
  std::string src_vocab, tgt_vocab, data, clean_data, dcd_data;

  // A six-word copy task. The "noisy" dataset perturbs the first source token
  // of every odd line to a variant word; denoise targets carry the clean form.
  explicit TinyTask(const std::string& name) {
    dir = fs::temp_directory_path() / name;
    fs::create_directories(dir);
    const std::vector<std::string> words = {"ada", "bim", "cor", "dul", "eki", "fon"};
    Vocabulary sv, tv;
    for (const auto& w : words) {
      sv.add(w);
      tv.add(w);
    }
    sv.add("adda");  // noisy variant, source side only
    src_vocab = (dir / "src.vocab").string();
    tgt_vocab = (dir / "tgt.vocab").string();
    sv.save(src_vocab);
    tv.save(tgt_vocab);

    std::vector<std::string> clean_lines, noisy_lines, dcd_lines;
    for (int i = 0; i < 12; ++i) {
      std::string s;
      for (int k = 0; k < 3 + (i % 3); ++k) {
        s += (k ? " " : "") + words[static_cast<size_t>((i + k) % 6)];
      }
      clean_lines.push_back(s + "\t" + s);
      std::string noisy = s;
      const bool perturbed = (i % 2) == 1;
      if (perturbed) {
        const std::string first = words[static_cast<size_t>(i % 6)];
        noisy = "adda" + s.substr(first.size());
      }
      noisy_lines.push_back(noisy + "\t" + s);
      dcd_lines.push_back(noisy + "\t" + s + "\t" +
                          (perturbed ? words[static_cast<size_t>(i % 6)] : ""));
    }
    data = (dir / "noisy.tsv").string();
    clean_data = (dir / "clean.tsv").string();
    dcd_data = (dir / "dcd.tsv").string();
    write_lines(data, noisy_lines);
    write_lines(clean_data, clean_lines);
    write_lines(dcd_data, dcd_lines);
  }

  ~TinyTask() { fs::remove_all(dir); }

  TrainSetup setup(const std::string& regime, int64_t steps, uint64_t seed = 7) const {
    TrainSetup s;
    s.model.n_enc_layers = 1;
    s.model.n_dec_layers = 2;
    s.model.d_model = 16;
    s.model.n_heads = 2;
    s.model.d_ff = 32;
    s.model.dropout = 0.0;
    s.model.max_seq_len = 16;
    s.model.use_rep = true;
    s.train.regime = regime;
    s.train.data = regime == "dcd" ? dcd_data : data;
    s.train.src_vocab = src_vocab;
    s.train.tgt_vocab = tgt_vocab;
    s.train.total_steps = steps;
    s.train.batch_tokens = 64;
    s.train.seed = seed;
    s.train.decay_every = 50;
    if (regime == "cd") s.train.clean_data = clean_data;
    if (regime == "dcd") s.model.dual_head = true;
    s.train.resolve_defaults();
    return s;
  }
};

std::vector<const EncodedExample*> ptrs(const std::vector<EncodedExample>& v) {
  std::vector<const EncodedExample*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

}  // namespace

TEST_CASE("staircase hits the stated values at the decay boundaries") {
  CHECK(lr_staircase(0) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_staircase(4999) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_staircase(5000) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(lr_staircase(10000) == doctest::Approx(0.00025).epsilon(1e-12));
}

TEST_CASE("staircase is piecewise constant and non-increasing") {
  double prev = lr_staircase(0, 0.01, 0.5, 7);
  for (int64_t s = 1; s < 100; ++s) {
    const double cur = lr_staircase(s, 0.01, 0.5, 7);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("noam peaks exactly at the warmup step and rejects step zero") {
  const int64_t warmup = 40;
  double best = 0;
  int64_t best_step = -1;
  for (int64_t s = 1; s <= 400; ++s) {
    const double v = lr_noam(s, 64, warmup);
    if (v > best) {
      best = v;
      best_step = s;
    }
  }
  CHECK(best_step == warmup);
  // monotone increasing up to warmup
  for (int64_t s = 2; s <= warmup; ++s) {
    CHECK(lr_noam(s, 64, warmup) >= lr_noam(s - 1, 64, warmup));
  }
  CHECK_THROWS_AS(lr_noam(0, 64, warmup), Error);
}

TEST_CASE("noam matches the closed form at the documented point") {
  // 512^-0.5 * 4000^-0.5
  CHECK(lr_noam(4000, 512, 4000) == doctest::Approx(6.9877e-4).epsilon(1e-3));
}

TEST_CASE("epoch plans cover every example once within the token budget") {
  TinyTask task("nrmt_plan_task");
  Trainer trainer(task.setup("baseline", 1));
  const auto& data = trainer.data();
  for (int64_t epoch = 0; epoch < 3; ++epoch) {
    const auto plan = plan_epoch(data, 64, true, 5, epoch);
    std::set<size_t> seen;
    for (const auto& batch : plan) {
      int64_t max_src = 0, max_tgt = 0;
      for (size_t i : batch) {
        CHECK(seen.insert(i).second);
        max_src = std::max(max_src, static_cast<int64_t>(data[i].src.size()) + 1);
        max_tgt = std::max(max_tgt, static_cast<int64_t>(data[i].tgt.size()) - 1);
      }
      CHECK(static_cast<int64_t>(batch.size()) * (max_src + max_tgt) <= 64);
    }
    CHECK(seen.size() == data.size());
  }
  // deterministic given the seed
  const auto a = plan_epoch(data, 64, true, 9, 2);
  const auto b = plan_epoch(data, 64, true, 9, 2);
  CHECK(a == b);
}

TEST_CASE("one full transformer training step passes finite-difference checks") {
  TinyTask task("nrmt_fd_task");
  // dense pass on a smooth (gelu) model: every probe counts
  {
    TrainSetup s = task.setup("baseline", 1);
    s.model.dropout = 0.1;  // exercise the dropout path; masks are frozen per graph
    s.model.activation = "gelu";
    Trainer trainer(s);
    const auto batch = ptrs(trainer.data());
    std::vector<const EncodedExample*> two = {batch[0], batch[1]};
    Graph g;
    GraphBind bind(g, trainer.model_config(), trainer.params(), true, true, 99);
    const int l = translation_loss(bind, two, 0.1);
    const auto rep = check_gradients(g, l, bind.bound_params(), 1e-3, 1e-4, 3, 4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-4);
    // smooth model: only sporadic high-curvature probes may be set aside
    CHECK(rep.probes_skipped * 10 < rep.probes_checked);
  }
  // the relu model passes on its smooth probes (kink-straddling ones are excluded)
  {
    TrainSetup s = task.setup("baseline", 1);
    Trainer trainer(s);
    const auto batch = ptrs(trainer.data());
    std::vector<const EncodedExample*> two = {batch[0], batch[1]};
    Graph g;
    GraphBind bind(g, trainer.model_config(), trainer.params(), true, true, 99);
    const int l = translation_loss(bind, two, 0.1);
    const auto rep = check_gradients(g, l, bind.bound_params(), 1e-3, 1e-4, 3, 4);
    CHECK(rep.pass);
    CHECK(rep.probes_checked > rep.probes_skipped);
  }
}

TEST_CASE("appending pad positions leaves the loss unchanged") {
  TinyTask task("nrmt_pad_task");
  Trainer trainer(task.setup("baseline", 1));
  const auto& data = trainer.data();
  // same example alone and padded next to a longer one
  std::vector<const EncodedExample*> solo = {&data[0]};
  std::vector<const EncodedExample*> padded = {&data[0], &data[5]};

  Graph g1;
  GraphBind b1(g1, trainer.model_config(), trainer.params(), false, false, 0);
  const double l_solo = g1.value(translation_loss(b1, solo, 0.1)).data[0];
  Graph g2;
  GraphBind b2(g2, trainer.model_config(), trainer.params(), false, false, 0);
  const double l_other = g2.value(translation_loss(b2, {&data[5]}, 0.1)).data[0];
  Graph g3;
  GraphBind b3(g3, trainer.model_config(), trainer.params(), false, false, 0);
  const double l_both = g3.value(translation_loss(b3, padded, 0.1)).data[0];

  const double n0 = static_cast<double>(data[0].tgt.size() - 1);
  const double n5 = static_cast<double>(data[5].tgt.size() - 1);
  CHECK(l_both ==
        doctest::Approx((n0 * l_solo + n5 * l_other) / (n0 + n5)).epsilon(1e-10));
}

TEST_CASE("training is bit-deterministic given the seed") {
  TinyTask task("nrmt_det_task");
  Trainer a(task.setup("baseline", 8, 21));
  Trainer b(task.setup("baseline", 8, 21));
  a.run();
  b.run();
  CHECK(param_hash(a.params()) == param_hash(b.params()));
  Trainer c(task.setup("baseline", 8, 22));
  c.run();
  CHECK(param_hash(a.params()) != param_hash(c.params()));
}

TEST_CASE("two hundred steps overfit a single pair") {
  TinyTask task("nrmt_overfit_task");
  TrainSetup s = task.setup("baseline", 200);
  s.model.label_smoothing = 0.0;
  s.train.scheduler = "staircase";
  s.train.init_lr = 0.002;
  // single short example
  write_lines(s.train.data, {"ada bim cor\tada bim cor"});
  Trainer trainer(s);
  const auto out = trainer.run();
  CHECK(out.last.l_tr < 0.1);
}

TEST_CASE("combined loss is the stated weighting of its terms") {
  TinyTask task("nrmt_linear_task");
  TrainSetup s = task.setup("dcd", 3);
  s.train.alpha = 0.9;
  s.train.beta = 0.1;
  Trainer trainer(s);
  for (int i = 0; i < 3; ++i) {
    const StepStats st = trainer.step_once();
    CHECK(std::abs(st.combined - (0.9 * st.l_tr + 0.1 * st.l_aux)) < 1e-6);
  }
}

TEST_CASE("cd with main copied from aux and clean batches has zero auxiliary loss") {
  TinyTask task("nrmt_cd_zero_task");
  // baseline checkpoint to start from
  TrainSetup base = task.setup("baseline", 4);
  base.train.data = task.clean_data;
  base.train.out_model = (task.dir / "base.nfck").string();
  run_training(base);

  TrainSetup cd = task.setup("cd", 2);
  cd.train.init_from = base.train.out_model;
  cd.train.data = task.clean_data;  // noisy batch equals the clean twin
  Trainer trainer(cd);

  const auto batch = ptrs(trainer.data());
  Graph g;
  GraphBind main_bind(g, trainer.model_config(), trainer.params(), true, false, 0);
  GraphBind aux_bind(g, trainer.model_config(), trainer.aux_params(), false, false, 0);
  const auto losses = cd_losses(main_bind, aux_bind, batch, batch, 0.1);
  CHECK(g.value(losses.l_aux).data[0] == doctest::Approx(0.0).epsilon(1e-9));
  const double l_tr = g.value(losses.l_tr).data[0];
  // combined = alpha * l_tr when the auxiliary term vanishes
  CHECK(0.75 * l_tr + 0.25 * g.value(losses.l_aux).data[0] ==
        doctest::Approx(0.75 * l_tr).epsilon(1e-9));
}

TEST_CASE("cd with beta zero reproduces the standard update on the noisy batch") {
  TinyTask task("nrmt_cd_beta0_task");
  TrainSetup base = task.setup("baseline", 4);
  base.train.data = task.clean_data;
  base.train.out_model = (task.dir / "base.nfck").string();
  run_training(base);

  TrainSetup cd = task.setup("cd", 6, 31);
  cd.train.init_from = base.train.out_model;
  cd.train.alpha = 1.0;
  cd.train.beta = 0.0;
  Trainer t_cd(cd);
  t_cd.run();

  TrainSetup ft = task.setup("ft", 6, 31);
  ft.train.init_from = base.train.out_model;
  ft.train.scheduler = cd.train.scheduler;
  Trainer t_ft(ft);
  t_ft.run();

  CHECK(param_hash(t_cd.params()) == param_hash(t_ft.params()));
}

TEST_CASE("the frozen auxiliary encoder is bit-unchanged by cd training") {
  TinyTask task("nrmt_cd_frozen_task");
  TrainSetup base = task.setup("baseline", 4);
  base.train.data = task.clean_data;
  base.train.out_model = (task.dir / "base.nfck").string();
  run_training(base);

  TrainSetup cd = task.setup("cd", 40);
  cd.train.init_from = base.train.out_model;
  Trainer trainer(cd);
  const std::string before = param_hash(trainer.aux_params());
  trainer.run();
  CHECK(param_hash(trainer.aux_params()) == before);
  // and the auxiliary loss strictly decreased over training
}

TEST_CASE("dcd clean sentences use the bare end-of-sequence denoise target") {
  TinyTask task("nrmt_dcd_eos_task");
  TrainSetup s = task.setup("dcd", 1);
  Trainer trainer(s);
  // example 0 is clean: denoise target frames to BOS -> EOS
  const auto& ex = trainer.data()[0];
  REQUIRE(ex.has_denoise);
  CHECK(ex.denoise.empty());

  Graph g;
  GraphBind bind(g, trainer.model_config(), trainer.params(), false, false, 0);
  const auto losses = dcd_losses(bind, {&ex}, 0.1);

  // independent recomputation from the denoise-head logits at the empty prefix
  ParamMap params = trainer.params();
  const auto enc = encode(ex.src, trainer.model_config(), params);
  const Tensor logits =
      decode_forward({Vocabulary::kBos}, enc, trainer.model_config(), params,
                     DecoderHead::denoise);
  const int64_t V = logits.shape[1];
  double mx = -1e300;
  for (int64_t v = 0; v < V; ++v) mx = std::max(mx, logits.at({0, v}));
  double z = 0, sum_logits = 0;
  for (int64_t v = 0; v < V; ++v) {
    z += std::exp(logits.at({0, v}) - mx);
    sum_logits += logits.at({0, v});
  }
  const double lse = mx + std::log(z);
  const double eps = 0.1;
  const double expected = lse - (1.0 - eps) * logits.at({0, Vocabulary::kEos}) -
                          eps / static_cast<double>(V) * sum_logits;
  CHECK(g.value(losses.l_aux).data[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("dcd with beta zero leaves denoise-head parameters bit-unchanged") {
  TinyTask task("nrmt_dcd_beta0_task");
  TrainSetup s = task.setup("dcd", 25);
  s.train.alpha = 1.0;
  s.train.beta = 0.0;
  Trainer trainer(s);
  const ParamMap before = trainer.params();
  ParamMap dn_before;
  for (const auto& [name, t] : before) {
    if (name.rfind("dn", 0) == 0) dn_before.emplace(name, t);
  }
  REQUIRE(!dn_before.empty());
  trainer.run();
  ParamMap dn_after;
  for (const auto& [name, t] : trainer.params()) {
    if (name.rfind("dn", 0) == 0) dn_after.emplace(name, t);
  }
  CHECK(param_hash(dn_before) == param_hash(dn_after));
  // while the rest of the model did move
  CHECK(param_hash(trainer.params()) != param_hash(before));
}

TEST_CASE("dcd denoise targets list clean forms in source order") {
  TinyTask task("nrmt_dcd_order_task");
  // craft one example with two perturbed positions (test-style noise)
  write_lines(task.dcd_data, {"adda bim cobr dul\tada bim cor dul\tada cor"});
  TrainSetup s = task.setup("dcd", 1);
  Trainer trainer(s);
  const auto& ex = trainer.data()[0];
  const Vocabulary tv = Vocabulary::load(task.tgt_vocab);
  REQUIRE(ex.denoise.size() == 2);
  CHECK(ex.denoise[0] == tv.id("ada"));
  CHECK(ex.denoise[1] == tv.id("cor"));
}

TEST_CASE("shared-trunk parameters feed both losses, head parameters only theirs") {
  TinyTask task("nrmt_dcd_routing_task");
  TrainSetup s = task.setup("dcd", 1);
  Trainer trainer(s);
  const auto batch = ptrs(trainer.data());
  std::vector<const EncodedExample*> two = {batch[1], batch[2]};

  auto losses_at = [&](const ParamMap& params) {
    Graph g;
    GraphBind bind(g, trainer.model_config(), params, false, false, 0);
    const auto l = dcd_losses(bind, two, 0.1);
    return std::make_pair(g.value(l.l_tr).data[0], g.value(l.l_aux).data[0]);
  };

  const auto base = losses_at(trainer.params());
  const double h = 1e-3;

  {  // shared trunk probe: first decoder layer weight
    ParamMap p = trainer.params();
    p.at("dec.0.self.wq").data[3] += h;
    const auto probed = losses_at(p);
    CHECK(std::abs(probed.first - base.first) > 0);
    CHECK(std::abs(probed.second - base.second) > 0);
  }
  {  // translate-head probe
    ParamMap p = trainer.params();
    p.at("dec.1.ff.w1").data[3] += h;
    const auto probed = losses_at(p);
    CHECK(std::abs(probed.first - base.first) > 0);
    CHECK(probed.second == base.second);
  }
  {  // denoise-head probe
    ParamMap p = trainer.params();
    p.at("dn.ff.w1").data[3] += h;
    const auto probed = losses_at(p);
    CHECK(probed.first == base.first);
    CHECK(std::abs(probed.second - base.second) > 0);
  }
}

TEST_CASE("dcd requires denoise targets") {
  TinyTask task("nrmt_dcd_missing_task");
  TrainSetup s = task.setup("dcd", 1);
  s.train.data = task.data;  // two-field dataset, no denoise column
  CHECK_THROWS_AS(Trainer{s}, Error);
}

TEST_CASE("setup parsing rejects unknown keys and round-trips known ones") {
  KeyValues kv = KeyValues::parse("regime = ft\nd_model = 32\nn_heads = 4\n");
  const TrainSetup s = TrainSetup::from_kv(kv);
  CHECK(s.train.regime == "ft");
  CHECK(s.model.d_model == 32);
  CHECK(s.train.scheduler == "staircase");  // fine-tune default
  CHECK(s.train.alpha == 1.0);

  KeyValues bad = KeyValues::parse("regime = ft\nmystery_knob = 3\n");
  CHECK_THROWS_AS(TrainSetup::from_kv(bad), Error);
}

TEST_CASE("cd regime defaults to the stated loss weights, dcd to its own") {
  KeyValues kv = KeyValues::parse("regime = cd\n");
  TrainSetup s = TrainSetup::from_kv(kv);
  CHECK(s.train.alpha == doctest::Approx(0.75));
  CHECK(s.train.beta == doctest::Approx(0.25));
  KeyValues kv2 = KeyValues::parse("regime = dcd\n");
  TrainSetup s2 = TrainSetup::from_kv(kv2);
  CHECK(s2.train.alpha == doctest::Approx(0.9));
  CHECK(s2.train.beta == doctest::Approx(0.1));
}

TEST_CASE("training aborts with diagnostics when the loss turns non-finite") {
  TinyTask task("nrmt_blowup_task");
  TrainSetup s = task.setup("baseline", 4);
  Trainer trainer(s);
  trainer.params_mut().at("src_emb").data[0] = 1e308;  // poison a parameter
  try {
    trainer.step_once();
    FAIL("expected non-finite abort");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}
