#include "nrmt/decode.hpp"

#include <algorithm>
#include <cmath>

#include "nrmt/error.hpp"
#include "nrmt/text.hpp"

namespace nrmt {

namespace {

double length_penalty_factor(int64_t len, double alpha) {
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

}  // namespace

std::vector<int64_t> translate_ids(const std::vector<int64_t>& src_ids,
                                   const ModelConfig& cfg, const ParamMap& params,
                                   const DecodeOptions& opts, DecodeTrace* trace) {
  if (src_ids.empty()) return {};
  if (opts.beam_size < 1) throw Error(ErrorKind::usage, "beam_size must be >= 1");
  const int64_t max_len = opts.max_len > 0 ? opts.max_len : cfg.max_seq_len;

  const EncoderOutput enc = encode(src_ids, cfg, params);
  const int64_t s = enc.states.shape[0];
  ModelConfig no_rep_cfg = cfg;
  no_rep_cfg.use_rep = false;  // states already exclude REP

  std::vector<Hypothesis> active = {{{}, 0.0, false}};
  std::vector<std::pair<double, Hypothesis>> finished;  // normalized score, hyp

  auto finish = [&](Hypothesis hyp) {
    const int64_t len = std::max<int64_t>(1, static_cast<int64_t>(hyp.ids.size()));
    hyp.finished = true;
    finished.emplace_back(hyp.log_prob / length_penalty_factor(len, opts.length_penalty),
                          std::move(hyp));
  };

  for (int64_t step = 0; step < max_len && !active.empty() &&
                         static_cast<int64_t>(finished.size()) < opts.beam_size;
       ++step) {
    // one batched decoder pass over all active prefixes (equal lengths)
    const int64_t B = static_cast<int64_t>(active.size());
    std::vector<std::vector<int64_t>> prefixes;
    prefixes.reserve(active.size());
    for (const auto& hyp : active) {
      std::vector<int64_t> prefix;
      prefix.reserve(hyp.ids.size() + 1);
      prefix.push_back(Vocabulary::kBos);
      prefix.insert(prefix.end(), hyp.ids.begin(), hyp.ids.end());
      prefixes.push_back(std::move(prefix));
    }
    Graph g;
    Tensor states = Tensor::zeros({B, s, cfg.d_model});
    for (int64_t b = 0; b < B; ++b) {
      std::copy(enc.states.data.begin(), enc.states.data.end(),
                states.data.begin() + b * s * cfg.d_model);
    }
    IdBatch src_stub;
    src_stub.batch = B;
    src_stub.width = s;
    src_stub.lens.assign(static_cast<size_t>(B), s);
    GraphBind bind(g, no_rep_cfg, params, /*trainable=*/false, /*train_mode=*/false, 0);
    const int logits_node =
        bind.decode_batch(make_id_batch(prefixes), g.input(std::move(states)), src_stub,
                          DecoderHead::translate);
    const Tensor& logits = g.value(logits_node);  // [B, T, V]
    const int64_t T = logits.shape[1];
    const int64_t V = logits.shape[2];

    struct Candidate {
      double score;
      size_t hyp;
      int64_t token;
    };
    std::vector<Candidate> candidates;
    for (size_t hi = 0; hi < active.size(); ++hi) {
      const int64_t row_len = static_cast<int64_t>(prefixes[hi].size());
      const double* row =
          logits.data.data() + (static_cast<int64_t>(hi) * T + (row_len - 1)) * V;
      double mx = -1e300;
      for (int64_t v = 0; v < V; ++v) mx = std::max(mx, row[v]);
      double z = 0.0;
      for (int64_t v = 0; v < V; ++v) z += std::exp(row[v] - mx);
      const double lse = mx + std::log(z);
      for (int64_t v = 0; v < V; ++v) {
        if (v == Vocabulary::kPad || v == Vocabulary::kBos || v == Vocabulary::kRep) continue;
        candidates.push_back({active[hi].log_prob + row[v] - lse, hi, v});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.hyp < b.hyp;
    });
    const size_t keep = std::min<size_t>(static_cast<size_t>(opts.beam_size), candidates.size());

    if (trace != nullptr) {
      std::vector<std::vector<int64_t>> step_prefixes;
      for (size_t c = 0; c < keep; ++c) {
        auto ids = active[candidates[c].hyp].ids;
        ids.push_back(candidates[c].token);
        step_prefixes.push_back(std::move(ids));
      }
      trace->step_candidates.push_back(std::move(step_prefixes));
    }

    std::vector<Hypothesis> next;
    for (size_t c = 0; c < keep; ++c) {
      Hypothesis hyp = active[candidates[c].hyp];
      hyp.log_prob = candidates[c].score;
      const int64_t tok = candidates[c].token;
      if (tok == Vocabulary::kEos || tok == Vocabulary::kSep) {
        // terminal symbol: neither it nor anything after it is emitted
        finish(std::move(hyp));
      } else {
        hyp.ids.push_back(tok);
        next.push_back(std::move(hyp));
      }
    }
    active = std::move(next);
  }
  if (static_cast<int64_t>(finished.size()) < opts.beam_size) {
    for (auto& hyp : active) finish(std::move(hyp));  // max_len reached
  }

  if (finished.empty()) return {};
  std::stable_sort(finished.begin(), finished.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return finished.front().second.ids;
}

Translator::Translator(const std::string& ckpt_path, const std::string& src_vocab_path,
                       const std::string& src_merges_path, const std::string& tgt_vocab_path,
                       DecodeOptions opts)
    : opts_(opts) {
  const Checkpoint ck = Checkpoint::load(ckpt_path);
  cfg_ = ck.config;
  cfg_.validate();
  params_ = strip_params(ck.params, "aux.");
  src_vocab_ = Vocabulary::load(src_vocab_path);
  tgt_vocab_ = Vocabulary::load(tgt_vocab_path);
  if (src_vocab_.size() != cfg_.src_vocab_size || tgt_vocab_.size() != cfg_.tgt_vocab_size) {
    throw Error(ErrorKind::data, "vocabulary files do not match the checkpoint sizes");
  }
  const SegScheme scheme = cfg_.src_scheme();
  if (scheme == SegScheme::bpe) {
    if (src_merges_path.empty()) {
      throw Error(ErrorKind::usage, "this model needs src merges for segmentation");
    }
    merges_ = MergeTable::load(src_merges_path);
  }
  segmenter_ = std::make_unique<Segmenter>(
      scheme, &src_vocab_, merges_.has_value() ? &merges_.value() : nullptr);
}

std::string Translator::translate_line(const std::string& line) {
  const auto seg = segmenter_->segment(line);
  if (seg.tokens.empty()) return "";
  const std::vector<int64_t> src_ids = src_vocab_.encode(seg.tokens);
  const auto out_ids = translate_ids(src_ids, cfg_, params_, opts_);
  std::vector<std::string> tokens;
  tokens.reserve(out_ids.size());
  for (int64_t id : out_ids) tokens.push_back(tgt_vocab_.token(id));
  return detokenize(tokens, SegScheme::bpe);
}

}  // namespace nrmt
