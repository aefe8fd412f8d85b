#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nrmt/config.hpp"
#include "nrmt/graph.hpp"
#include "nrmt/segment.hpp"
#include "nrmt/tensor.hpp"
#include "nrmt/vocab.hpp"

namespace nrmt {

struct ModelConfig {
  int64_t n_enc_layers = 8;
  int64_t n_dec_layers = 4;
  int64_t d_model = 64;
  int64_t n_heads = 4;
  int64_t d_ff = 256;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  int64_t max_seq_len = 64;
  bool use_rep = true;
  bool dual_head = false;
  int64_t src_vocab_size = 0;
  int64_t tgt_vocab_size = 0;
  std::string scheme = "bpe2bpe";  // word2bpe | bpe2bpe | char2bpe
  std::string activation = "relu";  // relu | gelu

  void validate() const;
  SegScheme src_scheme() const;
  bool try_set(const std::string& key, const std::string& value);
  void fill(KeyValues& kv) const;
  std::string serialize() const;
};

using ParamMap = std::map<std::string, Tensor>;

// Xavier-uniform weights, zero biases, unit layer-norm gains; values are
// quantized to the 32-bit grid so checkpoints round-trip bitwise.
ParamMap init_model(const ModelConfig& config, uint64_t seed);

int64_t param_count(const ParamMap& params);
std::string param_hash(const ParamMap& params);  // SHA-256 over shapes and values
// Drops every parameter whose name starts with `prefix`.
ParamMap strip_params(const ParamMap& params, const std::string& prefix);

// Sinusoidal table, rows 0..max_seq_len (inclusive so an appended REP
// position always has an encoding).
Tensor positional_encoding(int64_t rows, int64_t d_model);

enum class DecoderHead { translate, denoise };

struct EncoderOutput {
  Tensor states;              // [s, d_model], REP position excluded
  std::optional<Tensor> rep;  // [d_model], present iff use_rep
};

// Single-sentence eval-mode encode. REP is appended internally when
// configured; ids are validated against src_vocab_size and max_seq_len.
EncoderOutput encode(const std::vector<int64_t>& src_ids, const ModelConfig& config,
                     const ParamMap& params);

// Teacher-forced logits for a target prefix, eval mode, [prefix_len, V].
// Cross-attention consumes encoder states only. head == denoise requires a
// dual-head model.
Tensor decode_forward(const std::vector<int64_t>& tgt_prefix_ids,
                      const EncoderOutput& encoder_output, const ModelConfig& config,
                      const ParamMap& params, DecoderHead head = DecoderHead::translate);

// ---- shared graph-building machinery (training and decoding reuse it) ----

// Padded id batch plus per-row lengths. For source batches the REP token is
// already appended to every row when the model uses it.
struct IdBatch {
  std::vector<int64_t> flat;  // row-major [B, T], PAD-filled
  int64_t batch = 0;
  int64_t width = 0;
  std::vector<int64_t> lens;  // true row lengths (including REP on source rows)
};

IdBatch make_id_batch(const std::vector<std::vector<int64_t>>& rows);

// Binds one parameter set into one graph episode. `trainable` decides between
// gradient-carrying parameter leaves and frozen inputs.
class GraphBind {
 public:
  GraphBind(Graph& g, const ModelConfig& config, const ParamMap& params, bool trainable,
            bool train_mode, uint64_t dropout_seed);

  // Encoder over a source batch (REP appended by the caller via
  // prepare_source_rows). Returns states node [B, Ts, D]; rep_node receives
  // the [B, D] REP vectors when the model uses them, else -1.
  int encode_batch(const IdBatch& src, int* rep_node);

  // Decoder over a teacher-forced prefix batch against encoder states.
  // Returns logits [B, Tt, V].
  int decode_batch(const IdBatch& tgt_in, int enc_states, const IdBatch& src,
                   DecoderHead head);

  Graph& graph() { return *g_; }
  const ModelConfig& config() const { return *cfg_; }
  const std::vector<std::pair<std::string, int>>& bound_params() const { return bound_list_; }

 private:
  int node(const std::string& name);
  int linear(int x, const std::string& w, const std::string& b);
  int attention(const std::string& prefix, int xq, int xkv, int64_t kv_width,
                const Tensor* key_mask, bool causal);
  int ffn(const std::string& prefix, int x);
  int ln(const std::string& prefix, int x);
  int embed(const IdBatch& batch, const std::string& table);
  int maybe_dropout(int x);

  Graph* g_;
  const ModelConfig* cfg_;
  const ParamMap* params_;
  bool trainable_;
  bool train_mode_;
  Rng dropout_rng_;
  std::map<std::string, int> bound_;
  std::vector<std::pair<std::string, int>> bound_list_;
};

// Appends REP (when configured) and validates ids and lengths.
std::vector<std::vector<int64_t>> prepare_source_rows(
    const std::vector<std::vector<int64_t>>& src_ids, const ModelConfig& config);

// Masks: 1.0 marks positions to hide. Source self-attention hides pads;
// cross-attention additionally hides the REP position.
Tensor source_self_mask(const IdBatch& src);
Tensor source_cross_mask(const IdBatch& src, const ModelConfig& config);

}  // namespace nrmt
