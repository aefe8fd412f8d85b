#include "nrmt/train.hpp"

#include <algorithm>
#include <cmath>

#include "nrmt/error.hpp"
#include "nrmt/noise.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

double lr_staircase(int64_t step, double init_lr, double decay_rate, int64_t decay_every) {
  if (step < 0) throw Error(ErrorKind::usage, "staircase: step must be >= 0");
  if (decay_every <= 0) throw Error(ErrorKind::usage, "staircase: decay_every must be > 0");
  return init_lr * std::pow(decay_rate, static_cast<double>(step / decay_every));
}

double lr_noam(int64_t step, int64_t d_model, int64_t warmup) {
  if (step < 1) throw Error(ErrorKind::usage, "noam: step must be >= 1");
  if (warmup < 1) throw Error(ErrorKind::usage, "noam: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

std::vector<EncodedExample> encode_examples(const std::vector<DatasetExample>& examples,
                                            const Vocabulary& src_vocab,
                                            const Vocabulary& tgt_vocab,
                                            const ModelConfig& cfg) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    EncodedExample e;
    e.src = src_vocab.encode(ex.src);
    e.tgt.push_back(Vocabulary::kBos);
    for (const auto& t : ex.tgt) e.tgt.push_back(tgt_vocab.id_or_unk(t));
    e.tgt.push_back(Vocabulary::kEos);
    e.has_denoise = ex.has_denoise;
    for (const auto& t : ex.denoise) e.denoise.push_back(tgt_vocab.id_or_unk(t));
    if (static_cast<int64_t>(e.src.size()) > cfg.max_seq_len ||
        static_cast<int64_t>(e.tgt.size()) - 1 > cfg.max_seq_len ||
        static_cast<int64_t>(e.denoise.size()) + 1 > cfg.max_seq_len) {
      throw Error(ErrorKind::data, "example exceeds max_seq_len " +
                                       std::to_string(cfg.max_seq_len) + ": src " +
                                       std::to_string(e.src.size()) + ", tgt " +
                                       std::to_string(e.tgt.size()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::vector<size_t>> plan_epoch(const std::vector<EncodedExample>& data,
                                            int64_t batch_tokens, bool use_rep,
                                            uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0xB47C0000ULL + static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  auto cost_src = [&](size_t i) {
    return static_cast<int64_t>(data[i].src.size()) + (use_rep ? 1 : 0);
  };
  auto cost_tgt = [&](size_t i) { return static_cast<int64_t>(data[i].tgt.size()) - 1; };
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return cost_src(a) + cost_tgt(a) < cost_src(b) + cost_tgt(b);
  });

  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> cur;
  int64_t max_src = 0, max_tgt = 0;
  for (size_t idx : order) {
    if (cost_src(idx) + cost_tgt(idx) > batch_tokens) {
      throw Error(ErrorKind::data,
                  "single example exceeds batch_tokens " + std::to_string(batch_tokens));
    }
    const int64_t s = std::max(max_src, cost_src(idx));
    const int64_t t = std::max(max_tgt, cost_tgt(idx));
    const int64_t n = static_cast<int64_t>(cur.size()) + 1;
    if (!cur.empty() && n * (s + t) > batch_tokens) {
      batches.push_back(cur);
      cur.clear();
      max_src = max_tgt = 0;
    }
    cur.push_back(idx);
    max_src = std::max(max_src, cost_src(idx));
    max_tgt = std::max(max_tgt, cost_tgt(idx));
  }
  if (!cur.empty()) batches.push_back(cur);
  rng.shuffle(batches);
  return batches;
}

namespace {

struct TeacherBatch {
  IdBatch in;                        // teacher-forced inputs (BOS kept, EOS dropped)
  std::vector<int64_t> labels_flat;  // aligned with [B, T], PAD marks padding
};

TeacherBatch make_teacher_batch(const std::vector<std::vector<int64_t>>& framed) {
  std::vector<std::vector<int64_t>> in_rows;
  in_rows.reserve(framed.size());
  for (const auto& r : framed) in_rows.emplace_back(r.begin(), r.end() - 1);
  TeacherBatch tb;
  tb.in = make_id_batch(in_rows);
  tb.labels_flat.assign(static_cast<size_t>(tb.in.batch * tb.in.width), Vocabulary::kPad);
  for (size_t b = 0; b < framed.size(); ++b) {
    for (size_t t = 1; t < framed[b].size(); ++t) {
      tb.labels_flat[b * static_cast<size_t>(tb.in.width) + (t - 1)] = framed[b][t];
    }
  }
  return tb;
}

IdBatch make_source_batch(const ModelConfig& cfg,
                          const std::vector<const EncodedExample*>& batch) {
  std::vector<std::vector<int64_t>> rows;
  rows.reserve(batch.size());
  for (const auto* ex : batch) rows.push_back(ex->src);
  return make_id_batch(prepare_source_rows(rows, cfg));
}

std::vector<std::vector<int64_t>> target_rows(
    const std::vector<const EncodedExample*>& batch) {
  std::vector<std::vector<int64_t>> rows;
  rows.reserve(batch.size());
  for (const auto* ex : batch) rows.push_back(ex->tgt);
  return rows;
}

int teacher_forced_loss(GraphBind& bind, const IdBatch& src, int enc_states,
                        const std::vector<std::vector<int64_t>>& framed, DecoderHead head,
                        double label_smoothing) {
  const TeacherBatch tb = make_teacher_batch(framed);
  const int logits = bind.decode_batch(tb.in, enc_states, src, head);
  return bind.graph().cross_entropy_ls(logits, tb.labels_flat, label_smoothing,
                                       Vocabulary::kPad);
}

}  // namespace

int translation_loss(GraphBind& bind, const std::vector<const EncodedExample*>& batch,
                     double label_smoothing) {
  if (batch.empty()) throw Error(ErrorKind::internal, "translation_loss: empty batch");
  const IdBatch src = make_source_batch(bind.config(), batch);
  const int enc_states = bind.encode_batch(src, nullptr);
  return teacher_forced_loss(bind, src, enc_states, target_rows(batch),
                             DecoderHead::translate, label_smoothing);
}

AuxLosses cd_losses(GraphBind& main_bind, GraphBind& aux_bind,
                    const std::vector<const EncodedExample*>& noisy,
                    const std::vector<const EncodedExample*>& clean,
                    double label_smoothing) {
  if (noisy.size() != clean.size() || noisy.empty()) {
    throw Error(ErrorKind::data, "cd: noisy and clean batches must pair up");
  }
  if (!main_bind.config().use_rep || !aux_bind.config().use_rep) {
    throw Error(ErrorKind::data, "cd: both encoders need use_rep");
  }
  AuxLosses out;
  Graph& g = main_bind.graph();

  const IdBatch src_noisy = make_source_batch(main_bind.config(), noisy);
  int rep_main = -1;
  const int enc_states = main_bind.encode_batch(src_noisy, &rep_main);
  out.l_tr = teacher_forced_loss(main_bind, src_noisy, enc_states, target_rows(noisy),
                                 DecoderHead::translate, label_smoothing);

  const IdBatch src_clean = make_source_batch(aux_bind.config(), clean);
  int rep_aux = -1;
  aux_bind.encode_batch(src_clean, &rep_aux);

  out.l_aux = g.mse(rep_main, rep_aux);
  return out;
}

AuxLosses dcd_losses(GraphBind& bind, const std::vector<const EncodedExample*>& batch,
                     double label_smoothing) {
  if (!bind.config().dual_head) {
    throw Error(ErrorKind::data, "dcd: model must be dual_head");
  }
  for (const auto* ex : batch) {
    if (!ex->has_denoise) {
      throw Error(ErrorKind::data, "dcd: example is missing its denoise target");
    }
  }
  AuxLosses out;
  const IdBatch src = make_source_batch(bind.config(), batch);
  const int enc_states = bind.encode_batch(src, nullptr);
  out.l_tr = teacher_forced_loss(bind, src, enc_states, target_rows(batch),
                                 DecoderHead::translate, label_smoothing);

  std::vector<std::vector<int64_t>> den_rows;
  den_rows.reserve(batch.size());
  for (const auto* ex : batch) {
    std::vector<int64_t> framed;
    framed.push_back(Vocabulary::kBos);
    framed.insert(framed.end(), ex->denoise.begin(), ex->denoise.end());
    framed.push_back(Vocabulary::kEos);
    den_rows.push_back(std::move(framed));
  }
  out.l_aux =
      teacher_forced_loss(bind, src, enc_states, den_rows, DecoderHead::denoise,
                          label_smoothing);
  return out;
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

double Adam::step(ParamMap& params, Graph& g,
                  const std::vector<std::pair<std::string, int>>& bound, double lr,
                  double clip_norm) {
  double norm_sq = 0.0;
  for (const auto& [name, node] : bound) {
    if (!g.has_grad(node)) continue;
    for (double v : g.grad(node).data) norm_sq += v * v;
  }
  const double norm = std::sqrt(norm_sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  t_ += 1;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, node] : bound) {
    if (!g.has_grad(node)) continue;
    const Tensor& grad = g.grad(node);
    Tensor& p = params.at(name);
    auto it = state_.find(name);
    if (it == state_.end()) {
      it = state_.emplace(name, std::make_pair(Tensor::zeros(p.shape), Tensor::zeros(p.shape)))
               .first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double gi = grad.data[i] * scale;
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  return norm;
}

bool TrainConfig::try_set(const std::string& key, const std::string& value) {
  if (key == "regime") regime = value;
  else if (key == "alpha") alpha = parse_double(key, value);
  else if (key == "beta") beta = parse_double(key, value);
  else if (key == "scheduler") scheduler = value;
  else if (key == "init_lr") init_lr = parse_double(key, value);
  else if (key == "decay_rate") decay_rate = parse_double(key, value);
  else if (key == "decay_every") decay_every = parse_int64(key, value);
  else if (key == "warmup_steps") warmup_steps = parse_int64(key, value);
  else if (key == "batch_tokens") batch_tokens = parse_int64(key, value);
  else if (key == "total_steps") total_steps = parse_int64(key, value);
  else if (key == "seed") seed = parse_uint64(key, value);
  else if (key == "clip_norm") clip_norm = parse_double(key, value);
  else if (key == "init_from") init_from = value;
  else if (key == "data") data = value;
  else if (key == "clean_data") clean_data = value;
  else if (key == "src_vocab") src_vocab = value;
  else if (key == "tgt_vocab") tgt_vocab = value;
  else if (key == "out_model") out_model = value;
  else if (key == "log_file") log_file = value;
  else if (key == "resample_noise") resample_noise = parse_bool(key, value);
  else if (key == "lexicon") lexicon = value;
  else if (key == "raw_src") raw_src = value;
  else if (key == "raw_tgt") raw_tgt = value;
  else if (key == "src_merges") src_merges = value;
  else if (key == "tgt_merges") tgt_merges = value;
  else if (key == "sentence_fraction") sentence_fraction = parse_double(key, value);
  else return false;
  return true;
}

void TrainConfig::fill(KeyValues& kv) const {
  kv.set("regime", regime);
  kv.set("alpha", format_double(alpha));
  kv.set("beta", format_double(beta));
  kv.set("scheduler", scheduler);
  kv.set("init_lr", format_double(init_lr));
  kv.set("decay_rate", format_double(decay_rate));
  kv.set("decay_every", std::to_string(decay_every));
  kv.set("warmup_steps", std::to_string(warmup_steps));
  kv.set("batch_tokens", std::to_string(batch_tokens));
  kv.set("total_steps", std::to_string(total_steps));
  kv.set("seed", std::to_string(seed));
  kv.set("clip_norm", format_double(clip_norm));
  kv.set("init_from", init_from);
  kv.set("data", data);
  kv.set("clean_data", clean_data);
  kv.set("src_vocab", src_vocab);
  kv.set("tgt_vocab", tgt_vocab);
  kv.set("out_model", out_model);
  kv.set("log_file", log_file);
  kv.set("resample_noise", resample_noise ? "true" : "false");
  kv.set("lexicon", lexicon);
  kv.set("raw_src", raw_src);
  kv.set("raw_tgt", raw_tgt);
  kv.set("src_merges", src_merges);
  kv.set("tgt_merges", tgt_merges);
  kv.set("sentence_fraction", format_double(sentence_fraction));
}

void TrainConfig::resolve_defaults() {
  if (alpha < 0.0 && beta < 0.0) {
    if (regime == "cd") {
      alpha = 0.75;
      beta = 0.25;
    } else if (regime == "dcd") {
      alpha = 0.9;
      beta = 0.1;
    } else {
      alpha = 1.0;
      beta = 0.0;
    }
  } else {
    if (alpha < 0.0) alpha = 1.0;
    if (beta < 0.0) beta = 0.0;
  }
  if (scheduler.empty()) {
    scheduler = (regime == "baseline") ? "noam" : "staircase";
  }
}

void TrainConfig::validate() const {
  if (regime != "baseline" && regime != "ft" && regime != "taft" && regime != "cd" &&
      regime != "dcd") {
    throw Error(ErrorKind::data, "unknown regime: " + regime);
  }
  if (alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0) {
    throw Error(ErrorKind::data, "loss weights must satisfy alpha, beta >= 0, alpha+beta > 0");
  }
  if (scheduler != "noam" && scheduler != "staircase") {
    throw Error(ErrorKind::data, "unknown scheduler: " + scheduler);
  }
  if (total_steps <= 0) throw Error(ErrorKind::data, "total_steps must be positive");
  if (batch_tokens <= 0) throw Error(ErrorKind::data, "batch_tokens must be positive");
  if (data.empty()) throw Error(ErrorKind::data, "training data path is required");
  if (src_vocab.empty() || tgt_vocab.empty()) {
    throw Error(ErrorKind::data, "src_vocab and tgt_vocab paths are required");
  }
  if (regime == "cd") {
    if (clean_data.empty()) throw Error(ErrorKind::data, "cd requires clean_data");
    if (init_from.empty()) throw Error(ErrorKind::data, "cd requires init_from");
  }
  if (resample_noise && (lexicon.empty() || raw_src.empty() || raw_tgt.empty())) {
    throw Error(ErrorKind::data, "resample_noise requires lexicon, raw_src and raw_tgt");
  }
}

TrainSetup TrainSetup::from_kv(const KeyValues& kv) {
  TrainSetup s;
  for (const auto& [key, value] : kv.items) {
    if (s.model.try_set(key, value)) continue;
    if (s.train.try_set(key, value)) continue;
    throw Error(ErrorKind::data, "unknown config key: " + key);
  }
  s.train.resolve_defaults();
  return s;
}

KeyValues TrainSetup::to_kv() const {
  KeyValues kv;
  model.fill(kv);
  train.fill(kv);
  return kv;
}

Trainer::Trainer(TrainSetup setup) : setup_(std::move(setup)) {
  setup_.train.resolve_defaults();
  setup_.train.validate();
  src_vocab_ = Vocabulary::load(setup_.train.src_vocab);
  tgt_vocab_ = Vocabulary::load(setup_.train.tgt_vocab);

  ModelConfig& mc = setup_.model;
  if (mc.src_vocab_size == 0) mc.src_vocab_size = src_vocab_.size();
  if (mc.tgt_vocab_size == 0) mc.tgt_vocab_size = tgt_vocab_.size();
  if (mc.src_vocab_size != src_vocab_.size() || mc.tgt_vocab_size != tgt_vocab_.size()) {
    throw Error(ErrorKind::data, "configured vocab sizes disagree with the vocab files");
  }
  const std::string& regime = setup_.train.regime;
  if (regime == "dcd" && !mc.dual_head) {
    throw Error(ErrorKind::data, "dcd requires dual_head = true");
  }
  if (regime == "cd" && !mc.use_rep) {
    throw Error(ErrorKind::data, "cd requires use_rep = true");
  }
  mc.validate();

  params_ = init_model(mc, setup_.train.seed);
  if (!setup_.train.init_from.empty()) {
    const Checkpoint ck = Checkpoint::load(setup_.train.init_from);
    int64_t copied = 0;
    for (auto& [name, tensor] : params_) {
      const auto it = ck.params.find(name);
      if (it == ck.params.end()) continue;
      if (it->second.shape != tensor.shape) {
        throw Error(ErrorKind::data, "init_from parameter " + name + " has shape " +
                                         shape_str(it->second.shape) + ", model expects " +
                                         shape_str(tensor.shape));
      }
      tensor = it->second;
      ++copied;
    }
    if (copied == 0) {
      throw Error(ErrorKind::data,
                  "init_from checkpoint shares no parameters with this model: " +
                      setup_.train.init_from);
    }
    if (regime == "cd") {
      // frozen auxiliary encoder = the pretrained encoder from the same file
      for (const auto& [name, tensor] : ck.params) {
        if (name == "src_emb" || name.rfind("enc.", 0) == 0) {
          aux_params_.emplace(name, tensor);
        }
      }
      if (aux_params_.empty()) {
        throw Error(ErrorKind::data, "cd: init_from checkpoint has no encoder parameters");
      }
      // architecture and vocabulary must match between the two encoders
      const auto& ckc = ck.config;
      if (ckc.n_enc_layers != mc.n_enc_layers || ckc.d_model != mc.d_model ||
          ckc.n_heads != mc.n_heads || ckc.d_ff != mc.d_ff ||
          ckc.src_vocab_size != mc.src_vocab_size || !ckc.use_rep) {
        throw Error(ErrorKind::data,
                    "cd: auxiliary encoder architecture or vocabulary mismatch");
      }
    }
  }
  load_data();
}

void Trainer::load_data() {
  const TrainConfig& tc = setup_.train;
  data_ = encode_examples(load_dataset(tc.data), src_vocab_, tgt_vocab_, setup_.model);
  if (data_.empty()) throw Error(ErrorKind::data, "training data is empty: " + tc.data);
  if (tc.regime == "dcd") {
    for (const auto& e : data_) {
      if (!e.has_denoise) {
        throw Error(ErrorKind::data, "dcd: dataset lacks denoise targets: " + tc.data);
      }
    }
  }
  if (tc.regime == "cd") {
    clean_data_ =
        encode_examples(load_dataset(tc.clean_data), src_vocab_, tgt_vocab_, setup_.model);
    if (clean_data_.size() != data_.size()) {
      throw Error(ErrorKind::data, "cd: clean_data is not index-aligned with data");
    }
    for (size_t i = 0; i < data_.size(); ++i) {
      if (clean_data_[i].tgt != data_[i].tgt) {
        throw Error(ErrorKind::data,
                    "cd: clean_data target side differs from data at line " +
                        std::to_string(i + 1));
      }
    }
  }
}

void Trainer::rebuild_resampled_data(int64_t epoch) {
  const TrainConfig& tc = setup_.train;
  if (!tc.resample_noise) return;
  const NoiseLexicon lex = NoiseLexicon::load(tc.lexicon);
  const auto raw_src = read_lines(tc.raw_src);
  const auto raw_tgt = read_lines(tc.raw_tgt);
  const auto res = perturb_training(raw_src, lex, tc.sentence_fraction,
                                    derive_seed(tc.seed, 0x5E5A + static_cast<uint64_t>(epoch)));

  MergeTable src_merges, tgt_merges;
  const SegScheme src_scheme = setup_.model.src_scheme();
  if (src_scheme == SegScheme::bpe) {
    if (tc.src_merges.empty()) {
      throw Error(ErrorKind::data, "resample_noise with a bpe source requires src_merges");
    }
    src_merges = MergeTable::load(tc.src_merges);
  }
  if (tc.tgt_merges.empty()) {
    throw Error(ErrorKind::data, "resample_noise requires tgt_merges");
  }
  tgt_merges = MergeTable::load(tc.tgt_merges);
  Segmenter src_seg(src_scheme, &src_vocab_, src_scheme == SegScheme::bpe ? &src_merges : nullptr);
  Segmenter tgt_seg(SegScheme::bpe, nullptr, &tgt_merges);
  const AugmentMode mode =
      tc.regime == "taft" ? AugmentMode::taft : AugmentMode::ft;
  const auto ds = build_dataset(res.corpus, raw_tgt, res.records, src_seg, tgt_seg, mode,
                                tc.regime == "dcd");
  data_ = encode_examples(ds, src_vocab_, tgt_vocab_, setup_.model);
}

double Trainer::learning_rate(int64_t step) const {
  const TrainConfig& tc = setup_.train;
  if (tc.scheduler == "staircase") {
    return lr_staircase(step, tc.init_lr, tc.decay_rate, tc.decay_every);
  }
  return lr_noam(step + 1, setup_.model.d_model, tc.warmup_steps);
}

StepStats Trainer::run_step(const std::vector<size_t>& batch_idx) {
  const TrainConfig& tc = setup_.train;
  std::vector<const EncodedExample*> batch;
  batch.reserve(batch_idx.size());
  for (size_t i : batch_idx) batch.push_back(&data_[i]);

  Graph g;
  GraphBind bind(g, setup_.model, params_, /*trainable=*/true, /*train_mode=*/true,
                 derive_seed(tc.seed, 0xD0000000ULL + static_cast<uint64_t>(global_step_)));
  AuxLosses losses;
  if (tc.regime == "cd") {
    std::vector<const EncodedExample*> clean;
    clean.reserve(batch_idx.size());
    for (size_t i : batch_idx) clean.push_back(&clean_data_[i]);
    GraphBind aux_bind(g, setup_.model, aux_params_, /*trainable=*/false,
                       /*train_mode=*/false, 0);
    losses = cd_losses(bind, aux_bind, batch, clean, setup_.model.label_smoothing);
  } else if (tc.regime == "dcd") {
    losses = dcd_losses(bind, batch, setup_.model.label_smoothing);
  } else {
    losses.l_tr = translation_loss(bind, batch, setup_.model.label_smoothing);
  }

  int root = g.scale(losses.l_tr, tc.alpha);
  if (losses.l_aux >= 0) {
    root = g.add(root, g.scale(losses.l_aux, tc.beta));
  }

  StepStats stats;
  stats.step = global_step_;
  stats.lr = learning_rate(global_step_);
  stats.l_tr = g.value(losses.l_tr).data[0];
  stats.l_aux = losses.l_aux >= 0 ? g.value(losses.l_aux).data[0] : 0.0;
  stats.combined = g.value(root).data[0];

  try {
    g.backward(root);
    adam_.step(params_, g, bind.bound_params(), stats.lr, tc.clip_norm);
  } catch (const Error& e) {
    throw Error(e.kind(), "training step " + std::to_string(global_step_) +
                              " aborted: " + e.what() + " (lr " + format_double(stats.lr) +
                              ", combined loss " + format_double(stats.combined) + ")");
  }
  global_step_ += 1;
  return stats;
}

StepStats Trainer::step_once() {
  if (plan_pos_ >= plan_.size()) {
    rebuild_resampled_data(epoch_);
    plan_ = plan_epoch(data_, setup_.train.batch_tokens, setup_.model.use_rep,
                       setup_.train.seed, epoch_);
    plan_pos_ = 0;
    epoch_ += 1;
  }
  return run_step(plan_[plan_pos_++]);
}

TrainOutcome Trainer::run() {
  const TrainConfig& tc = setup_.train;
  TrainOutcome out;
  log_lines_.clear();
  while (global_step_ < tc.total_steps) {
    const StepStats s = step_once();
    out.last = s;
    out.steps = global_step_;
    log_lines_.push_back(std::to_string(s.step) + "\t" + format_double(s.lr) + "\t" +
                         format_double(s.l_tr) + "\t" + format_double(s.l_aux) + "\t" +
                         format_double(s.combined));
  }
  if (!tc.log_file.empty()) write_lines(tc.log_file, log_lines_);
  if (!tc.out_model.empty()) save_checkpoint(tc.out_model);
  return out;
}

void Trainer::save_checkpoint(const std::string& path) const {
  Checkpoint ck;
  ck.config = setup_.model;
  ck.params = params_;
  // the frozen auxiliary encoder travels with the file under its own prefix
  for (const auto& [name, tensor] : aux_params_) {
    ck.params.emplace("aux." + name, tensor);
  }
  ck.step = global_step_;
  ck.seed = setup_.train.seed;
  ck.save(path);
}

TrainOutcome run_training(const TrainSetup& setup) {
  Trainer trainer(setup);
  return trainer.run();
}

}  // namespace nrmt
