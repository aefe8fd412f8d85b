/* Public C API of the noise-robust translation toolkit.
 *
 * Every function returns an nrmt_status; on failure nrmt_last_error() gives
 * a human-readable message for the calling thread. File-producing calls also
 * write a "<output>.manifest.json" run manifest next to their primary output
 * so any artifact can be reproduced from its manifest.
 */
#ifndef NRMT_H
#define NRMT_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nrmt_status {
  NRMT_OK = 0,
  NRMT_EUSAGE = 1,    /* malformed request or arguments */
  NRMT_EDATA = 2,     /* malformed data, config contradiction, numeric failure */
  NRMT_EIO = 3,       /* file system problem */
  NRMT_EINTERNAL = 4, /* broken internal invariant */
} nrmt_status;

const char* nrmt_version(void);
/* Message of the most recent failure on this thread; empty when none. */
const char* nrmt_last_error(void);
void nrmt_string_free(char* s);

/* Learns byte-pair merges on a whitespace-tokenized corpus. */
nrmt_status nrmt_learn_bpe(const char* corpus_path, int num_merges,
                           const char* out_merges_path);

/* Builds a vocabulary for scheme "word", "bpe" or "char". top_k <= 0 keeps
 * everything; merges_path is required for "bpe" and ignored otherwise. */
nrmt_status nrmt_build_vocab(const char* corpus_path, const char* scheme, long top_k,
                             const char* merges_path, const char* out_vocab_path);

/* Injects natural noise. mode "train": fraction of sentences, one word each;
 * mode "test": fraction of all words. out_records_path may be NULL (test mode
 * writes records too when given). achieved_fraction may be NULL. */
nrmt_status nrmt_perturb(const char* mode, const char* corpus_path,
                         const char* lexicon_path, double fraction,
                         unsigned long long seed, const char* out_corpus_path,
                         const char* out_records_path, double* achieved_fraction);

/* Builds an FT or TAFT dataset from a (possibly perturbed) parallel corpus.
 * scheme names the model setting: word2bpe | bpe2bpe | char2bpe.
 * src_vocab_path is required for word2bpe, src_merges_path for bpe2bpe;
 * tgt_merges_path is always required. with_denoise adds the third column. */
nrmt_status nrmt_augment(const char* mode, const char* src_corpus_path,
                         const char* tgt_corpus_path, const char* records_path,
                         const char* scheme, const char* src_vocab_path,
                         const char* src_merges_path, const char* tgt_merges_path,
                         int with_denoise, const char* out_dataset_path);

/* Runs a training job described by a "key = value" config file; overrides is
 * an optional newline-separated list of additional settings applied on top.
 * Unknown keys are rejected. Writes checkpoint, step log and manifest as
 * configured. Either argument may be NULL. */
nrmt_status nrmt_train(const char* config_path, const char* overrides);

/* Generates the self-contained toy task (corpora + noise lexicon). */
nrmt_status nrmt_gen_toy(const char* task, long vocab_size, long len_min, long len_max,
                         long n_train, long n_dev, long n_test, long lexicon_words,
                         long variants_per_word, unsigned long long seed,
                         const char* out_dir);

typedef struct nrmt_translator nrmt_translator;

/* Opens a checkpoint for decoding. src_merges_path may be NULL unless the
 * model scheme is bpe2bpe. max_len <= 0 uses the model limit. */
nrmt_status nrmt_translator_open(const char* model_path, const char* src_vocab_path,
                                 const char* src_merges_path, const char* tgt_vocab_path,
                                 long beam_size, long max_len, double length_penalty,
                                 nrmt_translator** out);

/* Translates one tokenized line; *out_line is malloc'd, release it with
 * nrmt_string_free. */
nrmt_status nrmt_translate_line(nrmt_translator* t, const char* line, char** out_line);

/* Translates a file, one sentence per line. */
nrmt_status nrmt_translate_file(nrmt_translator* t, const char* in_path,
                                const char* out_path);

void nrmt_translator_close(nrmt_translator* t);

/* Tokenized corpus BLEU in [0, 100]. out_report_path may be NULL. */
nrmt_status nrmt_bleu(const char* hyp_path, const char* ref_path, int smoothing,
                      const char* out_report_path, double* score);

/* Noise-robustness sweep: perturbs the test set at each fraction (comma
 * separated, must include 0), translates and scores. Writes a TSV report and,
 * when with_table is set, an aligned plain-text table next to it. */
nrmt_status nrmt_sweep(const char* model_path, const char* src_vocab_path,
                       const char* src_merges_path, const char* tgt_vocab_path,
                       const char* test_src_path, const char* test_ref_path,
                       const char* lexicon_path, const char* fractions_csv,
                       unsigned long long seed, long beam_size, long max_len,
                       double length_penalty, const char* model_id,
                       const char* out_report_path, int with_table);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* NRMT_H */
