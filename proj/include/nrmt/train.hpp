#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nrmt/augment.hpp"
#include "nrmt/checkpoint.hpp"
#include "nrmt/config.hpp"
#include "nrmt/transformer.hpp"
#include "nrmt/vocab.hpp"

namespace nrmt {

// Piecewise-constant exponential decay: init_lr * decay_rate^floor(step / decay_every).
double lr_staircase(int64_t step, double init_lr = 0.001, double decay_rate = 0.5,
                    int64_t decay_every = 5000);
// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5); step starts at 1.
double lr_noam(int64_t step, int64_t d_model, int64_t warmup);

// Id-encoded example: tgt is BOS...EOS framed, denoise is unframed pieces.
struct EncodedExample {
  std::vector<int64_t> src;
  std::vector<int64_t> tgt;
  std::vector<int64_t> denoise;
  bool has_denoise = false;
};

std::vector<EncodedExample> encode_examples(const std::vector<DatasetExample>& examples,
                                            const Vocabulary& src_vocab,
                                            const Vocabulary& tgt_vocab,
                                            const ModelConfig& cfg);

// Token-bucketed epoch plan: every example exactly once, padded source+target
// tokens per batch bounded by batch_tokens, batch order shuffled per epoch.
std::vector<std::vector<size_t>> plan_epoch(const std::vector<EncodedExample>& data,
                                            int64_t batch_tokens, bool use_rep,
                                            uint64_t seed, int64_t epoch);

// Loss builders shared by the trainer and the tests. Node ids index into the
// bind's graph.
int translation_loss(GraphBind& bind, const std::vector<const EncodedExample*>& batch,
                     double label_smoothing);

struct AuxLosses {
  int l_tr = -1;
  int l_aux = -1;
};

// Eq. with the frozen auxiliary encoder: main consumes the noisy batch, aux
// the clean twin, and the auxiliary term is the mean squared distance between
// the two REP matrices.
AuxLosses cd_losses(GraphBind& main_bind, GraphBind& aux_bind,
                    const std::vector<const EncodedExample*>& noisy,
                    const std::vector<const EncodedExample*>& clean,
                    double label_smoothing);

// Dual-channel losses: translation and denoise teacher-forced passes through
// the shared decoder trunk, each ending in its own head.
AuxLosses dcd_losses(GraphBind& bind, const std::vector<const EncodedExample*>& batch,
                     double label_smoothing);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9);

  // Applies one update from the gradients accumulated in `g` for the bound
  // parameters, with global-norm clipping. Returns the pre-clip norm.
  double step(ParamMap& params, Graph& g,
              const std::vector<std::pair<std::string, int>>& bound, double lr,
              double clip_norm);

  int64_t updates() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> state_;  // m, v per parameter
};

struct TrainConfig {
  std::string regime = "baseline";  // baseline | ft | taft | cd | dcd
  double alpha = -1.0;              // negative = regime default
  double beta = -1.0;
  std::string scheduler;            // noam | staircase; empty = regime default
  double init_lr = 0.001;
  double decay_rate = 0.5;
  int64_t decay_every = 5000;
  int64_t warmup_steps = 4000;
  int64_t batch_tokens = 4096;
  int64_t total_steps = 0;
  uint64_t seed = 1;
  double clip_norm = 1.0;
  std::string init_from;
  std::string data;
  std::string clean_data;
  std::string src_vocab;
  std::string tgt_vocab;
  std::string out_model;
  std::string log_file;
  // optional per-epoch noise resampling (off by default): rebuilds the
  // perturbed dataset from the raw corpus every epoch
  bool resample_noise = false;
  std::string lexicon;
  std::string raw_src;
  std::string raw_tgt;
  std::string src_merges;
  std::string tgt_merges;
  double sentence_fraction = 0.5;

  bool try_set(const std::string& key, const std::string& value);
  void fill(KeyValues& kv) const;
  void resolve_defaults();  // alpha/beta/scheduler per regime
  void validate() const;
};

struct TrainSetup {
  TrainConfig train;
  ModelConfig model;

  // Unknown keys are rejected.
  static TrainSetup from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
};

struct StepStats {
  int64_t step = 0;
  double lr = 0.0;
  double l_tr = 0.0;
  double l_aux = 0.0;
  double combined = 0.0;
};

struct TrainOutcome {
  int64_t steps = 0;
  StepStats last;
};

class Trainer {
 public:
  explicit Trainer(TrainSetup setup);

  TrainOutcome run();     // full loop; writes checkpoint and log when configured
  StepStats step_once();  // single optimization step

  const ParamMap& params() const { return params_; }
  ParamMap& params_mut() { return params_; }
  const ParamMap& aux_params() const { return aux_params_; }
  const ModelConfig& model_config() const { return setup_.model; }
  const TrainConfig& train_config() const { return setup_.train; }
  const std::vector<EncodedExample>& data() const { return data_; }
  double learning_rate(int64_t step) const;
  void save_checkpoint(const std::string& path) const;

 private:
  void load_data();
  void rebuild_resampled_data(int64_t epoch);
  StepStats run_step(const std::vector<size_t>& batch_idx);

  TrainSetup setup_;
  Vocabulary src_vocab_;
  Vocabulary tgt_vocab_;
  std::vector<EncodedExample> data_;
  std::vector<EncodedExample> clean_data_;
  ParamMap params_;
  ParamMap aux_params_;
  Adam adam_;
  int64_t global_step_ = 0;
  int64_t epoch_ = 0;
  std::vector<std::vector<size_t>> plan_;
  size_t plan_pos_ = 0;
  std::vector<std::string> log_lines_;
};

TrainOutcome run_training(const TrainSetup& setup);

}  // namespace nrmt
