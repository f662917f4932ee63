/* C interface to the userbert core library.
 *
 * Every function returns a status code (UB_OK on success); on failure
 * ub_last_error() describes the problem for the calling thread. Handles are
 * opaque and must be released with their matching _close function. String
 * outputs are written into caller buffers and always NUL-terminated; a too
 * small buffer is a UB_ERR_CONFIG error.
 */
#ifndef USERBERT_H
#define USERBERT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
    UB_OK = 0,
    UB_ERR_IO = 1,       /* missing/corrupt files, write failures */
    UB_ERR_CONFIG = 2,   /* invalid configuration or arguments */
    UB_ERR_DATA = 3,     /* malformed or insufficient data */
    UB_ERR_INTERNAL = 4  /* contract violations, numeric failures */
};

/* Message for the last failing call on this thread; empty string if none. */
const char* ub_last_error(void);

typedef struct ub_corpus ub_corpus;
typedef struct ub_model ub_model;

/* Synthetic data generation. config_json follows the documented SynthConfig
 * schema; NULL or "" means defaults. Writes a behavior log and a truth table
 * and optionally reports corpus statistics. */
int ub_gen_data(const char* config_json, const char* log_path, const char* truth_path,
                unsigned long long* n_users_out, unsigned long long* n_events_out,
                unsigned long long* vocab_covered_out);

/* Loads a behavior log, keeping the most recent max_behaviors events per
 * user (0 = default 100). */
int ub_corpus_open(const char* log_path, size_t max_behaviors, ub_corpus** out);
void ub_corpus_close(ub_corpus* c);
int ub_corpus_stats(const ub_corpus* c, unsigned long long* n_users,
                    unsigned long long* n_events, unsigned long long* vocab_size);

/* Pre-trains from a fresh init and writes the checkpoint plus a metrics log.
 * config_json follows the TrainConfig schema; NULL or "" means defaults.
 * Wall-clock totals (seconds) are returned when the pointers are non-NULL. */
int ub_pretrain(ub_corpus* c, const char* config_json, const char* checkpoint_path,
                const char* metrics_path, double* total_seconds, double* sampling_seconds);

/* Checkpoint handles. ub_model_init builds an untrained model (the fine-tune
 * from scratch baseline) with vocab resolved from the corpus. */
int ub_model_open(const char* checkpoint_path, ub_model** out);
int ub_model_init(const char* config_json, ub_corpus* c, ub_model** out);
void ub_model_close(ub_model* m);
int ub_model_save(ub_model* m, const char* checkpoint_path);
int ub_model_fingerprint(const ub_model* m, char* buf, size_t buflen);

/* Supervised fine-tuning in place. finetune_config_json follows the
 * FinetuneConfig schema; NULL or "" means defaults. */
int ub_finetune(ub_model* m, ub_corpus* c, const char* truth_path,
                const char* finetune_config_json);

/* Ranking evaluation on held-out users. Refuses a corpus whose file hash
 * differs from the one recorded in the checkpoint unless force is nonzero.
 * report_path may be NULL to skip the report file. */
int ub_eval(ub_model* m, ub_corpus* c, const char* truth_path,
            const char* finetune_config_json, int force, const char* report_path,
            double* auc, double* ndcg_at_10, double* ap);

/* Runs n_steps of batch construction and negative selection with no updates
 * and writes the per-negative dump. */
int ub_inspect_pool(ub_model* m, ub_corpus* c, long long n_steps, const char* dump_path);

#ifdef __cplusplus
}
#endif

#endif /* USERBERT_H */
