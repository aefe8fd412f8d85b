#include "nrmt/transformer.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "nrmt/error.hpp"

namespace nrmt {

void ModelConfig::validate() const {
  if (n_enc_layers < 1 || n_dec_layers < 1) {
    throw Error(ErrorKind::data, "model needs at least one encoder and decoder layer");
  }
  if (d_model < 1 || d_ff < 1 || n_heads < 1 || max_seq_len < 1) {
    throw Error(ErrorKind::data, "model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw Error(ErrorKind::data, "d_model " + std::to_string(d_model) +
                                     " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (dual_head && n_dec_layers < 2) {
    throw Error(ErrorKind::data, "dual_head needs n_dec_layers >= 2 (shared trunk + head)");
  }
  if (src_vocab_size < Vocabulary::kNumReserved || tgt_vocab_size < Vocabulary::kNumReserved) {
    throw Error(ErrorKind::data, "vocab sizes must cover the reserved specials");
  }
  if (dropout < 0.0 || dropout >= 1.0 || label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw Error(ErrorKind::data, "dropout and label_smoothing must be in [0, 1)");
  }
  if (scheme != "word2bpe" && scheme != "bpe2bpe" && scheme != "char2bpe") {
    throw Error(ErrorKind::data, "unknown scheme: " + scheme);
  }
  if (activation != "relu" && activation != "gelu") {
    throw Error(ErrorKind::data, "unknown activation: " + activation);
  }
}

SegScheme ModelConfig::src_scheme() const {
  if (scheme == "word2bpe") return SegScheme::word;
  if (scheme == "char2bpe") return SegScheme::chars;
  return SegScheme::bpe;
}

bool ModelConfig::try_set(const std::string& key, const std::string& value) {
  if (key == "n_enc_layers") n_enc_layers = parse_int64(key, value);
  else if (key == "n_dec_layers") n_dec_layers = parse_int64(key, value);
  else if (key == "d_model") d_model = parse_int64(key, value);
  else if (key == "n_heads") n_heads = parse_int64(key, value);
  else if (key == "d_ff") d_ff = parse_int64(key, value);
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "label_smoothing") label_smoothing = parse_double(key, value);
  else if (key == "max_seq_len") max_seq_len = parse_int64(key, value);
  else if (key == "use_rep") use_rep = parse_bool(key, value);
  else if (key == "dual_head") dual_head = parse_bool(key, value);
  else if (key == "src_vocab_size") src_vocab_size = parse_int64(key, value);
  else if (key == "tgt_vocab_size") tgt_vocab_size = parse_int64(key, value);
  else if (key == "scheme") scheme = value;
  else if (key == "activation") activation = value;
  else return false;
  return true;
}

void ModelConfig::fill(KeyValues& kv) const {
  kv.set("n_enc_layers", std::to_string(n_enc_layers));
  kv.set("n_dec_layers", std::to_string(n_dec_layers));
  kv.set("d_model", std::to_string(d_model));
  kv.set("n_heads", std::to_string(n_heads));
  kv.set("d_ff", std::to_string(d_ff));
  kv.set("dropout", format_double(dropout));
  kv.set("label_smoothing", format_double(label_smoothing));
  kv.set("max_seq_len", std::to_string(max_seq_len));
  kv.set("use_rep", use_rep ? "true" : "false");
  kv.set("dual_head", dual_head ? "true" : "false");
  kv.set("src_vocab_size", std::to_string(src_vocab_size));
  kv.set("tgt_vocab_size", std::to_string(tgt_vocab_size));
  kv.set("scheme", scheme);
  kv.set("activation", activation);
}

std::string ModelConfig::serialize() const {
  KeyValues kv;
  fill(kv);
  return kv.serialize();
}

namespace {

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Tensor xavier(const Shape& shape, Rng& rng) {
  const double fan_in = static_cast<double>(shape[0]);
  const double fan_out = static_cast<double>(shape.size() > 1 ? shape[1] : shape[0]);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = quantize_f32(rng.uniform(-limit, limit));
  return t;
}

void init_attention(ParamMap& p, const std::string& prefix, int64_t d, Rng& rng) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) p[prefix + w] = xavier({d, d}, rng);
  for (const char* b : {"bq", "bk", "bv", "bo"}) p[prefix + b] = Tensor::zeros({d});
}

void init_ln(ParamMap& p, const std::string& prefix, int64_t d) {
  p[prefix + "g"] = Tensor::full({d}, 1.0);
  p[prefix + "b"] = Tensor::zeros({d});
}

void init_ffn(ParamMap& p, const std::string& prefix, int64_t d, int64_t f, Rng& rng) {
  p[prefix + "w1"] = xavier({d, f}, rng);
  p[prefix + "b1"] = Tensor::zeros({f});
  p[prefix + "w2"] = xavier({f, d}, rng);
  p[prefix + "b2"] = Tensor::zeros({d});
}

void init_decoder_layer(ParamMap& p, const std::string& prefix, const ModelConfig& cfg,
                        Rng& rng) {
  init_attention(p, prefix + "self.", cfg.d_model, rng);
  init_ln(p, prefix + "ln1.", cfg.d_model);
  init_attention(p, prefix + "cross.", cfg.d_model, rng);
  init_ln(p, prefix + "ln2.", cfg.d_model);
  init_ffn(p, prefix + "ff.", cfg.d_model, cfg.d_ff, rng);
  init_ln(p, prefix + "ln3.", cfg.d_model);
}

}  // namespace

ParamMap init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamMap p;
  p["src_emb"] = xavier({cfg.src_vocab_size, cfg.d_model}, rng);
  p["tgt_emb"] = xavier({cfg.tgt_vocab_size, cfg.d_model}, rng);
  for (int64_t i = 0; i < cfg.n_enc_layers; ++i) {
    const std::string prefix = "enc." + std::to_string(i) + ".";
    init_attention(p, prefix + "attn.", cfg.d_model, rng);
    init_ln(p, prefix + "ln1.", cfg.d_model);
    init_ffn(p, prefix + "ff.", cfg.d_model, cfg.d_ff, rng);
    init_ln(p, prefix + "ln2.", cfg.d_model);
  }
  for (int64_t i = 0; i < cfg.n_dec_layers; ++i) {
    init_decoder_layer(p, "dec." + std::to_string(i) + ".", cfg, rng);
  }
  p["out_proj"] = xavier({cfg.d_model, cfg.tgt_vocab_size}, rng);
  if (cfg.dual_head) {
    init_decoder_layer(p, "dn.", cfg, rng);
    p["dn_proj"] = xavier({cfg.d_model, cfg.tgt_vocab_size}, rng);
  }
  return p;
}

int64_t param_count(const ParamMap& params) {
  int64_t total = 0;
  for (const auto& [name, t] : params) total += t.numel();
  return total;
}

std::string param_hash(const ParamMap& params) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& [name, t] : params) {
    EVP_DigestUpdate(ctx, name.data(), name.size());
    EVP_DigestUpdate(ctx, t.shape.data(), t.shape.size() * sizeof(int64_t));
    EVP_DigestUpdate(ctx, t.data.data(), t.data.size() * sizeof(double));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

ParamMap strip_params(const ParamMap& params, const std::string& prefix) {
  ParamMap out;
  for (const auto& [name, t] : params) {
    if (name.rfind(prefix, 0) != 0) out.emplace(name, t);
  }
  return out;
}

Tensor positional_encoding(int64_t rows, int64_t d_model) {
  Tensor t = Tensor::zeros({rows, d_model});
  for (int64_t p = 0; p < rows; ++p) {
    for (int64_t i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(p) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      t.at({p, i}) = std::sin(angle);
      if (i + 1 < d_model) t.at({p, i + 1}) = std::cos(angle);
    }
  }
  return t;
}

IdBatch make_id_batch(const std::vector<std::vector<int64_t>>& rows) {
  IdBatch b;
  b.batch = static_cast<int64_t>(rows.size());
  for (const auto& r : rows) b.width = std::max(b.width, static_cast<int64_t>(r.size()));
  b.flat.assign(static_cast<size_t>(b.batch * b.width), Vocabulary::kPad);
  for (int64_t i = 0; i < b.batch; ++i) {
    const auto& r = rows[static_cast<size_t>(i)];
    b.lens.push_back(static_cast<int64_t>(r.size()));
    std::copy(r.begin(), r.end(), b.flat.begin() + i * b.width);
  }
  return b;
}

std::vector<std::vector<int64_t>> prepare_source_rows(
    const std::vector<std::vector<int64_t>>& src_ids, const ModelConfig& cfg) {
  std::vector<std::vector<int64_t>> rows = src_ids;
  for (auto& r : rows) {
    if (static_cast<int64_t>(r.size()) > cfg.max_seq_len) {
      throw Error(ErrorKind::data,
                  "source sequence of length " + std::to_string(r.size()) +
                      " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    for (int64_t id : r) {
      if (id < 0 || id >= cfg.src_vocab_size) {
        throw Error(ErrorKind::data, "unknown source id " + std::to_string(id) +
                                         " for vocab of size " +
                                         std::to_string(cfg.src_vocab_size));
      }
    }
    if (cfg.use_rep) r.push_back(Vocabulary::kRep);
  }
  return rows;
}

Tensor source_self_mask(const IdBatch& src) {
  Tensor m = Tensor::zeros({src.batch, 1, 1, src.width});
  for (int64_t b = 0; b < src.batch; ++b) {
    for (int64_t t = src.lens[static_cast<size_t>(b)]; t < src.width; ++t) {
      m.data[static_cast<size_t>(b * src.width + t)] = 1.0;
    }
  }
  return m;
}

Tensor source_cross_mask(const IdBatch& src, const ModelConfig& cfg) {
  Tensor m = Tensor::zeros({src.batch, 1, 1, src.width});
  for (int64_t b = 0; b < src.batch; ++b) {
    // hide REP (the appended last real position) as well as padding
    int64_t visible = src.lens[static_cast<size_t>(b)];
    if (cfg.use_rep) visible -= 1;
    for (int64_t t = visible; t < src.width; ++t) {
      m.data[static_cast<size_t>(b * src.width + t)] = 1.0;
    }
  }
  return m;
}

GraphBind::GraphBind(Graph& g, const ModelConfig& config, const ParamMap& params,
                     bool trainable, bool train_mode, uint64_t dropout_seed)
    : g_(&g),
      cfg_(&config),
      params_(&params),
      trainable_(trainable),
      train_mode_(train_mode),
      dropout_rng_(dropout_seed) {}

int GraphBind::node(const std::string& name) {
  const auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const auto pit = params_->find(name);
  if (pit == params_->end()) {
    throw Error(ErrorKind::data, "missing model parameter: " + name);
  }
  const int id = trainable_ ? g_->param(pit->second) : g_->input(pit->second);
  bound_.emplace(name, id);
  bound_list_.emplace_back(name, id);
  return id;
}

int GraphBind::maybe_dropout(int x) {
  if (!train_mode_ || cfg_->dropout == 0.0) return x;
  return g_->dropout(x, cfg_->dropout, dropout_rng_);
}

int GraphBind::linear(int x, const std::string& w, const std::string& b) {
  return g_->add(g_->matmul(x, node(w)), node(b));
}

int GraphBind::ln(const std::string& prefix, int x) {
  const int normed = g_->layer_norm(x, -1, 1e-5);
  return g_->add(g_->mul(normed, node(prefix + "g")), node(prefix + "b"));
}

int GraphBind::embed(const IdBatch& batch, const std::string& table) {
  if (batch.width > cfg_->max_seq_len + 1) {
    throw Error(ErrorKind::data, "sequence of length " + std::to_string(batch.width) +
                                     " exceeds max_seq_len " +
                                     std::to_string(cfg_->max_seq_len));
  }
  const int emb = g_->embedding(node(table), batch.flat, {batch.batch, batch.width});
  const int scaled = g_->scale(emb, std::sqrt(static_cast<double>(cfg_->d_model)));
  static thread_local std::map<std::pair<int64_t, int64_t>, Tensor> pos_cache;
  const auto key = std::make_pair(cfg_->max_seq_len + 1, cfg_->d_model);
  auto it = pos_cache.find(key);
  if (it == pos_cache.end()) {
    it = pos_cache.emplace(key, positional_encoding(key.first, key.second)).first;
  }
  Tensor pos = Tensor::zeros({batch.width, cfg_->d_model});
  std::memcpy(pos.data.data(), it->second.data.data(),
              static_cast<size_t>(batch.width * cfg_->d_model) * sizeof(double));
  const int with_pos = g_->add(scaled, g_->input(std::move(pos)));
  return maybe_dropout(with_pos);
}

int GraphBind::attention(const std::string& prefix, int xq, int xkv, int64_t kv_width,
                         const Tensor* key_mask, bool causal) {
  const int64_t B = g_->value(xq).shape[0];
  const int64_t Tq = g_->value(xq).shape[1];
  const int64_t D = cfg_->d_model;
  const int64_t H = cfg_->n_heads;
  const int64_t dh = D / H;

  auto heads = [&](int x, int64_t T) {
    const int r = g_->reshape(x, {B, T, H, dh});
    return g_->permute(r, {0, 2, 1, 3});  // [B, H, T, dh]
  };

  const int q = heads(linear(xq, prefix + "wq", prefix + "bq"), Tq);
  const int k = heads(linear(xkv, prefix + "wk", prefix + "bk"), kv_width);
  const int v = heads(linear(xkv, prefix + "wv", prefix + "bv"), kv_width);

  int scores = g_->scale(g_->matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (causal) {
    Tensor cm = Tensor::zeros({1, 1, Tq, Tq});
    for (int64_t i = 0; i < Tq; ++i) {
      for (int64_t j = i + 1; j < Tq; ++j) cm.data[static_cast<size_t>(i * Tq + j)] = 1.0;
    }
    scores = g_->masked_fill(scores, std::move(cm), -1e9);
  }
  if (key_mask != nullptr) {
    scores = g_->masked_fill(scores, *key_mask, -1e9);
  }
  const int att = maybe_dropout(g_->softmax(scores, -1));
  const int ctx = g_->matmul(att, v);                       // [B, H, Tq, dh]
  const int merged = g_->reshape(g_->permute(ctx, {0, 2, 1, 3}), {B, Tq, D});
  return linear(merged, prefix + "wo", prefix + "bo");
}

int GraphBind::ffn(const std::string& prefix, int x) {
  const int pre = linear(x, prefix + "w1", prefix + "b1");
  const int h = cfg_->activation == "gelu" ? g_->gelu(pre) : g_->relu(pre);
  return linear(h, prefix + "w2", prefix + "b2");
}

int GraphBind::encode_batch(const IdBatch& src, int* rep_node) {
  const Tensor self_mask = source_self_mask(src);
  int x = embed(src, "src_emb");
  for (int64_t i = 0; i < cfg_->n_enc_layers; ++i) {
    const std::string prefix = "enc." + std::to_string(i) + ".";
    const int a = attention(prefix + "attn.", x, x, src.width, &self_mask, false);
    x = ln(prefix + "ln1.", g_->add(x, maybe_dropout(a)));
    const int f = ffn(prefix + "ff.", x);
    x = ln(prefix + "ln2.", g_->add(x, maybe_dropout(f)));
  }
  if (rep_node != nullptr) {
    if (cfg_->use_rep) {
      std::vector<int64_t> rep_pos;
      for (int64_t b = 0; b < src.batch; ++b) rep_pos.push_back(src.lens[static_cast<size_t>(b)] - 1);
      *rep_node = g_->select_positions(x, rep_pos);
    } else {
      *rep_node = -1;
    }
  }
  return x;
}

int GraphBind::decode_batch(const IdBatch& tgt_in, int enc_states, const IdBatch& src,
                            DecoderHead head) {
  if (head == DecoderHead::denoise && !cfg_->dual_head) {
    throw Error(ErrorKind::data, "denoise head requested on a single-head model");
  }
  const Tensor cross_mask = source_cross_mask(src, *cfg_);
  int x = embed(tgt_in, "tgt_emb");
  const int64_t shared = cfg_->dual_head ? cfg_->n_dec_layers - 1 : cfg_->n_dec_layers;

  auto layer = [&](const std::string& prefix, int h) {
    const int a = attention(prefix + "self.", h, h, tgt_in.width, nullptr, true);
    h = ln(prefix + "ln1.", g_->add(h, maybe_dropout(a)));
    const int c = attention(prefix + "cross.", h, enc_states, src.width, &cross_mask, false);
    h = ln(prefix + "ln2.", g_->add(h, maybe_dropout(c)));
    const int f = ffn(prefix + "ff.", h);
    return ln(prefix + "ln3.", g_->add(h, maybe_dropout(f)));
  };

  for (int64_t i = 0; i < shared; ++i) x = layer("dec." + std::to_string(i) + ".", x);
  if (cfg_->dual_head) {
    if (head == DecoderHead::translate) {
      x = layer("dec." + std::to_string(cfg_->n_dec_layers - 1) + ".", x);
    } else {
      x = layer("dn.", x);
    }
  }
  const std::string proj = head == DecoderHead::denoise ? "dn_proj" : "out_proj";
  return g_->matmul(x, node(proj));
}

EncoderOutput encode(const std::vector<int64_t>& src_ids, const ModelConfig& cfg,
                     const ParamMap& params) {
  cfg.validate();
  const auto rows = prepare_source_rows({src_ids}, cfg);
  const IdBatch batch = make_id_batch(rows);
  Graph g;
  GraphBind bind(g, cfg, params, /*trainable=*/false, /*train_mode=*/false, 0);
  int rep_node = -1;
  const int states = bind.encode_batch(batch, &rep_node);

  const int64_t s = static_cast<int64_t>(src_ids.size());
  const Tensor& out = g.value(states);  // [1, T, D]
  EncoderOutput eo;
  eo.states = Tensor::zeros({s, cfg.d_model});
  std::memcpy(eo.states.data.data(), out.data.data(),
              static_cast<size_t>(s * cfg.d_model) * sizeof(double));
  if (cfg.use_rep) {
    const Tensor& rep = g.value(rep_node);  // [1, D]
    eo.rep = Tensor({cfg.d_model}, rep.data);
  }
  return eo;
}

Tensor decode_forward(const std::vector<int64_t>& tgt_prefix_ids,
                      const EncoderOutput& encoder_output, const ModelConfig& cfg,
                      const ParamMap& params, DecoderHead head) {
  cfg.validate();
  if (static_cast<int64_t>(tgt_prefix_ids.size()) > cfg.max_seq_len) {
    throw Error(ErrorKind::data,
                "target prefix of length " + std::to_string(tgt_prefix_ids.size()) +
                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (int64_t id : tgt_prefix_ids) {
    if (id < 0 || id >= cfg.tgt_vocab_size) {
      throw Error(ErrorKind::data, "unknown target id " + std::to_string(id));
    }
  }
  const int64_t s = encoder_output.states.shape[0];
  Graph g;

  // Encoder states enter as a frozen [1, s, D] input. REP was already
  // excluded when they were produced, so the stub batch masks nothing.
  Tensor states3 = Tensor::zeros({1, s, cfg.d_model});
  states3.data = encoder_output.states.data;
  const int enc_states = g.input(std::move(states3));
  IdBatch src_stub;
  src_stub.batch = 1;
  src_stub.width = s;
  src_stub.lens = {s};
  ModelConfig no_rep_cfg = cfg;
  no_rep_cfg.use_rep = false;

  const IdBatch tgt = make_id_batch({tgt_prefix_ids});
  GraphBind bind(g, no_rep_cfg, params, /*trainable=*/false, /*train_mode=*/false, 0);
  const int logits = bind.decode_batch(tgt, enc_states, src_stub, head);

  const Tensor& out = g.value(logits);  // [1, T, V]
  return Tensor({static_cast<int64_t>(tgt_prefix_ids.size()), cfg.tgt_vocab_size}, out.data);
}

}  // namespace nrmt
