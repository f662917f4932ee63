#include "userbert/userbert.h"

#include <cstring>
#include <memory>
#include <set>
#include <string>

#include "config.hpp"
#include "data.hpp"
#include "downstream.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "pretrain.hpp"

struct ub_corpus {
    ub::data::Corpus corpus;
    std::string path;
    std::string hash;
};

struct ub_model {
    ub::io::Checkpoint ck;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

// Exceptions cross the C boundary as status codes.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return UB_OK;
    } catch (const ub::IoError& e) {
        return fail(UB_ERR_IO, e.what());
    } catch (const ub::ConfigError& e) {
        return fail(UB_ERR_CONFIG, e.what());
    } catch (const ub::DataError& e) {
        return fail(UB_ERR_DATA, e.what());
    } catch (const ub::Error& e) {
        return fail(UB_ERR_INTERNAL, e.what());
    } catch (const std::exception& e) {
        return fail(UB_ERR_INTERNAL, e.what());
    }
}

void require(bool cond, const char* msg) {
    if (!cond) throw ub::ConfigError(msg);
}

void copy_out(const std::string& s, char* buf, size_t buflen) {
    require(buf != nullptr && buflen > s.size(), "output buffer too small");
    std::memcpy(buf, s.c_str(), s.size() + 1);
}

ub::TrainConfig parse_train(const char* config_json) {
    if (config_json == nullptr || config_json[0] == '\0') return ub::TrainConfig{};
    return ub::TrainConfig::from_json_text(config_json);
}

ub::FinetuneConfig parse_finetune(const char* config_json) {
    if (config_json == nullptr || config_json[0] == '\0') return ub::FinetuneConfig{};
    return ub::FinetuneConfig::from_json_text(config_json);
}

// Stable hash over the raw parameter bytes, used to tag eval reports.
std::string params_hash(const ub::model::ModelParams& params) {
    std::uint64_t h = 1469598103934665603ull;
    for (const ub::num::ParamGroup* g : params.groups())
        h = ub::fnv1a(g->value.data(), g->value.size() * sizeof(double), h);
    return ub::hash_hex(h);
}

}  // namespace

extern "C" {

const char* ub_last_error(void) { return g_last_error.c_str(); }

int ub_gen_data(const char* config_json, const char* log_path, const char* truth_path,
                unsigned long long* n_users_out, unsigned long long* n_events_out,
                unsigned long long* vocab_covered_out) {
    return guarded([&] {
        require(log_path && truth_path, "log_path and truth_path are required");
        ub::data::SynthConfig cfg;
        if (config_json != nullptr && config_json[0] != '\0')
            cfg = ub::io::synth_config_from_json_text(config_json);
        cfg.validate();
        ub::data::TruthTable truth;
        ub::data::Corpus corpus = ub::data::generate_synthetic(cfg, &truth);
        ub::data::save_logs(corpus, log_path);
        ub::data::save_truth(truth, truth_path);
        unsigned long long events = 0;
        std::set<int> seen;
        for (const auto& log : corpus.logs)
            for (const auto& ev : log.events) {
                ++events;
                seen.insert(ev.id);
            }
        if (n_users_out) *n_users_out = corpus.logs.size();
        if (n_events_out) *n_events_out = events;
        if (vocab_covered_out) *vocab_covered_out = seen.size();
    });
}

int ub_corpus_open(const char* log_path, size_t max_behaviors, ub_corpus** out) {
    return guarded([&] {
        require(log_path && out, "log_path and out are required");
        auto c = std::make_unique<ub_corpus>();
        c->corpus = ub::data::load_logs(log_path, max_behaviors == 0 ? 100 : max_behaviors);
        c->path = log_path;
        c->hash = ub::file_hash(log_path);
        *out = c.release();
    });
}

void ub_corpus_close(ub_corpus* c) { delete c; }

int ub_corpus_stats(const ub_corpus* c, unsigned long long* n_users,
                    unsigned long long* n_events, unsigned long long* vocab_size) {
    return guarded([&] {
        require(c != nullptr, "corpus handle is null");
        unsigned long long events = 0;
        for (const auto& log : c->corpus.logs) events += log.events.size();
        if (n_users) *n_users = c->corpus.logs.size();
        if (n_events) *n_events = events;
        if (vocab_size) *vocab_size = c->corpus.vocab_size;
    });
}

int ub_pretrain(ub_corpus* c, const char* config_json, const char* checkpoint_path,
                const char* metrics_path, double* total_seconds, double* sampling_seconds) {
    return guarded([&] {
        require(c != nullptr, "corpus handle is null");
        ub::TrainConfig cfg = ub::pretrain::resolve_config(parse_train(config_json), c->corpus);
        ub::pretrain::PretrainResult res = ub::pretrain::run_pretraining(c->corpus, cfg);
        if (checkpoint_path)
            ub::io::save_checkpoint(checkpoint_path, res.params, cfg, c->hash);
        if (metrics_path) ub::io::write_metrics_log(metrics_path, res.log, cfg.fingerprint());
        if (total_seconds) *total_seconds = res.timings.total_seconds;
        if (sampling_seconds) *sampling_seconds = res.timings.sampling_seconds;
    });
}

int ub_model_open(const char* checkpoint_path, ub_model** out) {
    return guarded([&] {
        require(checkpoint_path && out, "checkpoint_path and out are required");
        auto m = std::make_unique<ub_model>();
        m->ck = ub::io::load_checkpoint(checkpoint_path);
        *out = m.release();
    });
}

int ub_model_init(const char* config_json, ub_corpus* c, ub_model** out) {
    return guarded([&] {
        require(c != nullptr && out != nullptr, "corpus handle and out are required");
        ub::TrainConfig cfg = ub::pretrain::resolve_config(parse_train(config_json), c->corpus);
        ub::model::ModelConfig mc{cfg.hidden_dim, cfg.query_dim, cfg.heads,
                                  cfg.max_len,    cfg.vocab_size, cfg.mean_pooling};
        ub::Rng rng = ub::Rng::derive(cfg.seed, "init");
        auto m = std::make_unique<ub_model>();
        m->ck.cfg = cfg;
        m->ck.params = ub::model::ModelParams::init(mc, cfg.init_scale, rng);
        m->ck.data_hash = c->hash;
        *out = m.release();
    });
}

void ub_model_close(ub_model* m) { delete m; }

int ub_model_save(ub_model* m, const char* checkpoint_path) {
    return guarded([&] {
        require(m != nullptr && checkpoint_path != nullptr,
                "model handle and checkpoint_path are required");
        ub::io::save_checkpoint(checkpoint_path, m->ck.params, m->ck.cfg, m->ck.data_hash);
    });
}

int ub_model_fingerprint(const ub_model* m, char* buf, size_t buflen) {
    return guarded([&] {
        require(m != nullptr, "model handle is null");
        copy_out(m->ck.cfg.fingerprint(), buf, buflen);
    });
}

int ub_finetune(ub_model* m, ub_corpus* c, const char* truth_path,
                const char* finetune_config_json) {
    return guarded([&] {
        require(m != nullptr && c != nullptr && truth_path != nullptr,
                "model, corpus and truth_path are required");
        ub::data::TruthTable truth = ub::data::load_truth(truth_path);
        ub::FinetuneConfig fcfg = parse_finetune(finetune_config_json);
        m->ck.params = ub::downstream::finetune(std::move(m->ck.params), c->corpus, truth,
                                                fcfg, m->ck.cfg.max_len);
    });
}

int ub_eval(ub_model* m, ub_corpus* c, const char* truth_path,
            const char* finetune_config_json, int force, const char* report_path,
            double* auc, double* ndcg_at_10, double* ap) {
    return guarded([&] {
        require(m != nullptr && c != nullptr && truth_path != nullptr,
                "model, corpus and truth_path are required");
        if (!force && !m->ck.data_hash.empty() && m->ck.data_hash != c->hash)
            throw ub::ConfigError(
                "data hash mismatch: checkpoint was trained on a different log file "
                "(use force to override)");
        ub::data::TruthTable truth = ub::data::load_truth(truth_path);
        ub::FinetuneConfig fcfg = parse_finetune(finetune_config_json);
        ub::downstream::EvalReport rep = ub::downstream::evaluate(
            m->ck.params, c->corpus, truth, fcfg, m->ck.cfg.max_len);
        if (report_path)
            ub::io::write_eval_report(report_path, rep, m->ck.cfg.fingerprint(),
                                      params_hash(m->ck.params));
        if (auc) *auc = rep.auc;
        if (ndcg_at_10) *ndcg_at_10 = rep.ndcg_at_10;
        if (ap) *ap = rep.ap;
    });
}

int ub_inspect_pool(ub_model* m, ub_corpus* c, long long n_steps, const char* dump_path) {
    return guarded([&] {
        require(m != nullptr && c != nullptr && dump_path != nullptr,
                "model, corpus and dump_path are required");
        require(n_steps > 0, "n_steps must be positive");
        ub::TrainConfig cfg = ub::pretrain::resolve_config(m->ck.cfg, c->corpus);
        std::vector<ub::pretrain::NegDumpLine> lines =
            ub::pretrain::inspect_pool(c->corpus, m->ck.params, cfg, n_steps);
        ub::io::write_neg_dump(dump_path, lines, cfg.fingerprint());
    });
}

}  // extern "C"
