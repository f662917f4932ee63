// Command-line front end. All model work goes through the C API in
// userbert.h; this file only does flag handling, config merging and
// orchestration. Exit codes: 0 success, 2 configuration error, 1 anything
// else (IO, data, internal).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "userbert/userbert.h"

using nlohmann::json;

namespace {

int rc_from_status(int st) {
    if (st == UB_OK) return 0;
    return st == UB_ERR_CONFIG ? 2 : 1;
}

int report_error(int st) {
    std::fprintf(stderr, "error: %s\n", ub_last_error());
    return rc_from_status(st);
}

#define CHECK(call)                                  \
    do {                                             \
        const int st_ = (call);                      \
        if (st_ != UB_OK) return report_error(st_);  \
    } while (0)

struct CorpusHandle {
    ub_corpus* h = nullptr;
    ~CorpusHandle() { ub_corpus_close(h); }
};

struct ModelHandle {
    ub_model* h = nullptr;
    ~ModelHandle() { ub_model_close(h); }
};

bool passed(const CLI::App& cmd, const std::string& name) {
    const CLI::Option* o = cmd.get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
}

// flags > config file > defaults: the file (if any) seeds the object and
// explicitly passed flags overwrite keys before the JSON goes to the API.
json load_config_json(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        json j = json::parse(ss.str());
        if (!j.is_object())
            throw CLI::ValidationError("--config", "config file must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw CLI::ValidationError("--config", std::string("bad JSON: ") + e.what());
    }
}

std::size_t max_behaviors_of(const json& train) {
    return train.contains("max_behaviors") ? train.at("max_behaviors").get<std::size_t>()
                                           : std::size_t{0};
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

// -------- gen-data --------

struct GenArgs {
    std::string config, out_log, out_truth;
    unsigned long long seed = 0;
    std::size_t users = 0, vocab = 0, topics = 0, interests = 0, events = 0;
    double noise = 0.0;
};

int run_gen_data(const CLI::App& cmd, const GenArgs& a) {
    json j = load_config_json(a.config);
    if (passed(cmd, "--seed")) j["seed"] = a.seed;
    if (passed(cmd, "--users")) j["n_users"] = a.users;
    if (passed(cmd, "--vocab")) j["vocab_size"] = a.vocab;
    if (passed(cmd, "--topics")) j["n_topics"] = a.topics;
    if (passed(cmd, "--interests")) j["interests_per_user"] = a.interests;
    if (passed(cmd, "--events")) j["events_per_user"] = a.events;
    if (passed(cmd, "--noise")) j["behavior_noise"] = a.noise;
    unsigned long long users = 0, events = 0, covered = 0;
    CHECK(ub_gen_data(j.dump().c_str(), a.out_log.c_str(), a.out_truth.c_str(), &users,
                      &events, &covered));
    std::printf("users=%llu events=%llu vocab_covered=%llu\n", users, events, covered);
    return 0;
}

// -------- pretrain --------

struct PretrainArgs {
    std::string data, config, out_checkpoint, out_metrics;
    std::string mode, tasks;
    unsigned long long seed = 0;
    std::size_t steps = 0, m = 0, u = 0, interval = 0, k = 0, p = 0, batch = 0;
    double lr = 0.0;
};

json merged_train_json(const CLI::App& cmd, const PretrainArgs& a) {
    json j = load_config_json(a.config);
    if (passed(cmd, "--mode")) j["sampling_mode"] = a.mode;
    if (passed(cmd, "--tasks")) j["tasks"] = a.tasks;
    if (passed(cmd, "--seed")) j["seed"] = a.seed;
    if (passed(cmd, "--steps")) j["steps"] = a.steps;
    if (passed(cmd, "--pool-m")) j["behavior_pool_m"] = a.m;
    if (passed(cmd, "--pool-u")) j["sequence_pool_u"] = a.u;
    if (passed(cmd, "--interval")) j["update_interval"] = a.interval;
    if (passed(cmd, "--negatives-k")) j["negatives_k"] = a.k;
    if (passed(cmd, "--negatives-p")) j["negatives_p"] = a.p;
    if (passed(cmd, "--batch-size")) j["batch_size"] = a.batch;
    if (passed(cmd, "--lr")) j["lr"] = a.lr;
    return j;
}

int run_pretrain(const CLI::App& cmd, const PretrainArgs& a) {
    json j;
    try {
        j = merged_train_json(cmd, a);
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    CorpusHandle corpus;
    CHECK(ub_corpus_open(a.data.c_str(), max_behaviors_of(j), &corpus.h));
    double total = 0.0, sampling = 0.0;
    CHECK(ub_pretrain(corpus.h, j.dump().c_str(), a.out_checkpoint.c_str(),
                      a.out_metrics.empty() ? nullptr : a.out_metrics.c_str(), &total,
                      &sampling));
    std::printf("checkpoint=%s total_seconds=%.3f sampling_seconds=%.3f\n",
                a.out_checkpoint.c_str(), total, sampling);
    return 0;
}

// -------- finetune / eval --------

struct TuneArgs {
    std::string data, truth, checkpoint, config, finetune_config, out_checkpoint, out_report;
    bool scratch = false, force = false, freeze = false;
    unsigned long long seed = 0;
    std::size_t steps = 0, batch = 0, pairs = 0;
    double lr = 0.0, label_fraction = 0.0, holdout = 0.0;
};

json merged_finetune_json(const CLI::App& cmd, const TuneArgs& a) {
    json j = load_config_json(a.finetune_config);
    if (passed(cmd, "--seed")) j["seed"] = a.seed;
    if (passed(cmd, "--steps")) j["steps"] = a.steps;
    if (passed(cmd, "--batch-size")) j["batch_size"] = a.batch;
    if (passed(cmd, "--pairs-per-user")) j["pairs_per_user"] = a.pairs;
    if (passed(cmd, "--lr")) j["lr"] = a.lr;
    if (passed(cmd, "--label-fraction")) j["label_fraction"] = a.label_fraction;
    if (passed(cmd, "--holdout-fraction")) j["holdout_fraction"] = a.holdout;
    if (passed(cmd, "--freeze-encoder")) j["freeze_encoder"] = a.freeze;
    return j;
}

int open_model(const TuneArgs& a, ub_corpus* corpus, ub_model** out) {
    if (a.scratch) {
        const json j = load_config_json(a.config);
        return ub_model_init(j.dump().c_str(), corpus, out);
    }
    return ub_model_open(a.checkpoint.c_str(), out);
}

int run_finetune(const CLI::App& cmd, const TuneArgs& a) {
    const json fcfg = merged_finetune_json(cmd, a);
    CorpusHandle corpus;
    CHECK(ub_corpus_open(a.data.c_str(), 0, &corpus.h));
    ModelHandle model;
    CHECK(open_model(a, corpus.h, &model.h));
    CHECK(ub_finetune(model.h, corpus.h, a.truth.c_str(), fcfg.dump().c_str()));
    CHECK(ub_model_save(model.h, a.out_checkpoint.c_str()));
    std::printf("checkpoint=%s\n", a.out_checkpoint.c_str());
    return 0;
}

int run_eval(const CLI::App& cmd, const TuneArgs& a) {
    const json fcfg = merged_finetune_json(cmd, a);
    CorpusHandle corpus;
    CHECK(ub_corpus_open(a.data.c_str(), 0, &corpus.h));
    ModelHandle model;
    CHECK(ub_model_open(a.checkpoint.c_str(), &model.h));
    double auc = 0.0, ndcg = 0.0, ap = 0.0;
    CHECK(ub_eval(model.h, corpus.h, a.truth.c_str(), fcfg.dump().c_str(), a.force ? 1 : 0,
                  a.out_report.empty() ? nullptr : a.out_report.c_str(), &auc, &ndcg, &ap));
    std::printf("auc=%.6f ndcg_at_10=%.6f ap=%.6f\n", auc, ndcg, ap);
    return 0;
}

// -------- inspect-pool --------

struct InspectArgs {
    std::string data, checkpoint, out;
    long long steps = 1;
};

int run_inspect(const InspectArgs& a) {
    CorpusHandle corpus;
    CHECK(ub_corpus_open(a.data.c_str(), 0, &corpus.h));
    ModelHandle model;
    CHECK(ub_model_open(a.checkpoint.c_str(), &model.h));
    CHECK(ub_inspect_pool(model.h, corpus.h, a.steps, a.out.c_str()));
    std::printf("dump=%s\n", a.out.c_str());
    return 0;
}

// -------- ablate --------

struct AblateArgs {
    std::string data, truth, out, workdir = "ablate-work";
    std::string config, finetune_config;
    std::string grid_m, grid_u, grid_interval, grid_mode, grid_label_fraction;
    unsigned long long seed = 1;
    std::size_t steps = 0;
    long long inspect_steps = 5;
};

double mean_dump_score(const std::string& dump_path) {
    std::ifstream in(dump_path);
    if (!in) throw std::runtime_error("cannot read dump: " + dump_path);
    std::string line;
    std::getline(in, line);  // version line
    std::getline(in, line);  // column header
    double sum = 0.0;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const std::size_t tab = line.rfind('\t');
        if (tab == std::string::npos) continue;
        sum += std::stod(line.substr(tab + 1));
        ++n;
    }
    if (n == 0) throw std::runtime_error("empty dump: " + dump_path);
    return sum / static_cast<double>(n);
}

std::set<std::string> existing_cells(const std::string& path) {
    std::set<std::string> done;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("cell\t", 0) == 0) continue;
        const std::size_t tab = line.find('\t');
        if (tab != std::string::npos) done.insert(line.substr(0, tab));
    }
    return done;
}

int run_ablate(const CLI::App& cmd, const AblateArgs& a) {
    json base;
    try {
        base = load_config_json(a.config);
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    if (passed(cmd, "--seed")) base["seed"] = a.seed;
    if (passed(cmd, "--steps")) base["steps"] = a.steps;
    json ft_base = load_config_json(a.finetune_config);
    if (passed(cmd, "--seed")) ft_base["seed"] = a.seed;

    const std::vector<std::string> ms =
        a.grid_m.empty() ? std::vector<std::string>{""} : split_csv(a.grid_m);
    const std::vector<std::string> us =
        a.grid_u.empty() ? std::vector<std::string>{""} : split_csv(a.grid_u);
    const std::vector<std::string> intervals =
        a.grid_interval.empty() ? std::vector<std::string>{""} : split_csv(a.grid_interval);
    const std::vector<std::string> modes =
        a.grid_mode.empty() ? std::vector<std::string>{""} : split_csv(a.grid_mode);
    const std::vector<std::string> lfs = a.grid_label_fraction.empty()
                                             ? std::vector<std::string>{""}
                                             : split_csv(a.grid_label_fraction);

    std::error_code ec;
    std::filesystem::create_directories(a.workdir, ec);
    if (ec) {
        std::fprintf(stderr, "error: cannot create workdir %s\n", a.workdir.c_str());
        return 1;
    }

    const std::set<std::string> done = existing_cells(a.out);
    const bool fresh = !std::filesystem::exists(a.out);
    std::ofstream out(a.out, std::ios::app);
    std::ofstream timing(a.out + ".timing", std::ios::app);
    if (!out || !timing) {
        std::fprintf(stderr, "error: cannot open output %s\n", a.out.c_str());
        return 1;
    }
    if (fresh) {
        out << "# userbert-ablate v1\n";
        out << "cell\tm\tu\tinterval\tmode\tlabel_fraction\tauc\tndcg_at_10\tap\tmean_neg_sim\n";
        timing << "# userbert-ablate-timing v1 (wall-clock, not reproducible)\n";
        timing << "cell\tstep_seconds\tsampling_step_seconds\n";
    }

    CorpusHandle corpus;
    CHECK(ub_corpus_open(a.data.c_str(), max_behaviors_of(base), &corpus.h));

    for (const std::string& m : ms)
        for (const std::string& u : us)
            for (const std::string& iv : intervals)
                for (const std::string& mode : modes)
                    for (const std::string& lf : lfs) {
                        json cfg = base;
                        if (!m.empty()) cfg["behavior_pool_m"] = std::stoull(m);
                        if (!u.empty()) cfg["sequence_pool_u"] = std::stoull(u);
                        if (!iv.empty()) cfg["update_interval"] = std::stoull(iv);
                        if (!mode.empty()) cfg["sampling_mode"] = mode;
                        json ft = ft_base;
                        if (!lf.empty()) ft["label_fraction"] = std::stod(lf);

                        const std::string key = "m" + (m.empty() ? "def" : m) + "_u" +
                                                (u.empty() ? "def" : u) + "_i" +
                                                (iv.empty() ? "def" : iv) + "_" +
                                                (mode.empty() ? "def" : mode) + "_lf" +
                                                (lf.empty() ? "def" : lf);
                        if (done.count(key)) {
                            std::printf("cell %s: already done, skipping\n", key.c_str());
                            continue;
                        }
                        std::printf("cell %s: running\n", key.c_str());
                        std::fflush(stdout);

                        const std::string ckpt = a.workdir + "/" + key + ".ubck";
                        const std::string dump = a.workdir + "/" + key + ".dump";
                        double total = 0.0, sampling = 0.0;
                        CHECK(ub_pretrain(corpus.h, cfg.dump().c_str(), ckpt.c_str(), nullptr,
                                          &total, &sampling));

                        ModelHandle model;
                        CHECK(ub_model_open(ckpt.c_str(), &model.h));
                        CHECK(ub_inspect_pool(model.h, corpus.h, a.inspect_steps,
                                              dump.c_str()));
                        double sim = 0.0;
                        try {
                            sim = mean_dump_score(dump);
                        } catch (const std::exception& e) {
                            std::fprintf(stderr, "error: %s\n", e.what());
                            return 1;
                        }
                        CHECK(ub_finetune(model.h, corpus.h, a.truth.c_str(),
                                          ft.dump().c_str()));
                        double auc = 0.0, ndcg = 0.0, ap = 0.0;
                        CHECK(ub_eval(model.h, corpus.h, a.truth.c_str(), ft.dump().c_str(),
                                      0, nullptr, &auc, &ndcg, &ap));

                        const double steps_d =
                            cfg.contains("steps") ? cfg.at("steps").get<double>() : 2000.0;
                        char row[512];
                        std::snprintf(row, sizeof row,
                                      "%s\t%s\t%s\t%s\t%s\t%s\t%.6f\t%.6f\t%.6f\t%.6f\n",
                                      key.c_str(), m.empty() ? "-" : m.c_str(),
                                      u.empty() ? "-" : u.c_str(),
                                      iv.empty() ? "-" : iv.c_str(),
                                      mode.empty() ? "-" : mode.c_str(),
                                      lf.empty() ? "-" : lf.c_str(), auc, ndcg, ap, sim);
                        out << row;
                        out.flush();
                        timing << key << '\t' << (total / steps_d) << '\t'
                               << (sampling / steps_d) << '\n';
                        timing.flush();
                    }
    std::printf("results=%s\n", a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"userbert: contrastive user-model pre-training on behavior logs"};
    app.require_subcommand(1);
    int rc = 0;

    GenArgs ga;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic behavior corpus");
    gen->add_option("--config", ga.config, "SynthConfig JSON file");
    gen->add_option("--out-log", ga.out_log, "behavior log output path")->required();
    gen->add_option("--out-truth", ga.out_truth, "truth table output path")->required();
    gen->add_option("--seed", ga.seed, "RNG seed");
    gen->add_option("--users", ga.users, "number of users");
    gen->add_option("--vocab", ga.vocab, "vocabulary size");
    gen->add_option("--topics", ga.topics, "number of topics");
    gen->add_option("--interests", ga.interests, "topics per user");
    gen->add_option("--events", ga.events, "events per user");
    gen->add_option("--noise", ga.noise, "off-topic behavior probability");
    gen->callback([&] { rc = run_gen_data(*gen, ga); });

    PretrainArgs pa;
    CLI::App* pre = app.add_subcommand("pretrain", "pre-train from a behavior log");
    pre->add_option("--data", pa.data, "behavior log path")->required();
    pre->add_option("--config", pa.config, "TrainConfig JSON file");
    pre->add_option("--out-checkpoint", pa.out_checkpoint, "checkpoint output path")
        ->required();
    pre->add_option("--out-metrics", pa.out_metrics, "per-step metrics log path");
    pre->add_option("--mode", pa.mode, "random | medium_hard | global_hardest");
    pre->add_option("--tasks", pa.tasks, "both | mbp | bsm");
    pre->add_option("--seed", pa.seed, "RNG seed");
    pre->add_option("--steps", pa.steps, "training steps");
    pre->add_option("--pool-m", pa.m, "behavior pool size");
    pre->add_option("--pool-u", pa.u, "sequence pool size");
    pre->add_option("--interval", pa.interval, "sequence pool update interval");
    pre->add_option("--negatives-k", pa.k, "MBP negatives per slot");
    pre->add_option("--negatives-p", pa.p, "BSM negatives per pair");
    pre->add_option("--batch-size", pa.batch, "sequences per step");
    pre->add_option("--lr", pa.lr, "Adam learning rate");
    pre->callback([&] { rc = run_pretrain(*pre, pa); });

    TuneArgs fa;
    CLI::App* fin = app.add_subcommand("finetune", "supervised fine-tuning");
    fin->add_option("--data", fa.data, "behavior log path")->required();
    fin->add_option("--truth", fa.truth, "truth table path")->required();
    fin->add_option("--checkpoint", fa.checkpoint, "pre-trained checkpoint");
    fin->add_flag("--scratch", fa.scratch, "start from a fresh init instead of a checkpoint");
    fin->add_option("--config", fa.config, "TrainConfig JSON file (with --scratch)");
    fin->add_option("--finetune-config", fa.finetune_config, "FinetuneConfig JSON file");
    fin->add_option("--out-checkpoint", fa.out_checkpoint, "fine-tuned checkpoint path")
        ->required();
    fin->add_option("--seed", fa.seed, "RNG seed");
    fin->add_option("--steps", fa.steps, "fine-tuning steps");
    fin->add_option("--batch-size", fa.batch, "examples per step");
    fin->add_option("--lr", fa.lr, "Adam learning rate");
    fin->add_option("--label-fraction", fa.label_fraction, "fraction of users with labels");
    fin->add_option("--holdout-fraction", fa.holdout, "fraction of users held out for eval");
    fin->add_option("--pairs-per-user", fa.pairs, "labeled examples per user");
    fin->add_flag("--freeze-encoder", fa.freeze, "train the embedding table only");
    fin->callback([&] {
        if (fa.scratch ? !fa.checkpoint.empty() : fa.checkpoint.empty()) {
            std::fprintf(stderr, "error: provide exactly one of --checkpoint or --scratch\n");
            rc = 2;
            return;
        }
        rc = run_finetune(*fin, fa);
    });

    TuneArgs ea;
    CLI::App* ev = app.add_subcommand("eval", "ranking metrics on held-out users");
    ev->add_option("--data", ea.data, "behavior log path")->required();
    ev->add_option("--truth", ea.truth, "truth table path")->required();
    ev->add_option("--checkpoint", ea.checkpoint, "checkpoint to evaluate")->required();
    ev->add_option("--finetune-config", ea.finetune_config, "FinetuneConfig JSON file");
    ev->add_option("--out-report", ea.out_report, "report output path");
    ev->add_flag("--force", ea.force, "ignore a data hash mismatch");
    ev->add_option("--seed", ea.seed, "RNG seed");
    ev->add_option("--holdout-fraction", ea.holdout, "fraction of users held out for eval");
    ev->add_option("--pairs-per-user", ea.pairs, "labeled examples per user");
    ev->callback([&] { rc = run_eval(*ev, ea); });

    InspectArgs ia;
    CLI::App* ins = app.add_subcommand("inspect-pool", "dump negative selections");
    ins->add_option("--data", ia.data, "behavior log path")->required();
    ins->add_option("--checkpoint", ia.checkpoint, "checkpoint path")->required();
    ins->add_option("--step-count", ia.steps, "steps to simulate")->required();
    ins->add_option("--out", ia.out, "dump output path")->required();
    ins->callback([&] { rc = run_inspect(ia); });

    AblateArgs aa;
    CLI::App* ab = app.add_subcommand("ablate", "grid of pretrain+finetune+eval runs");
    ab->add_option("--data", aa.data, "behavior log path")->required();
    ab->add_option("--truth", aa.truth, "truth table path")->required();
    ab->add_option("--out", aa.out, "results table path")->required();
    ab->add_option("--workdir", aa.workdir, "per-cell artifact directory");
    ab->add_option("--config", aa.config, "base TrainConfig JSON file");
    ab->add_option("--finetune-config", aa.finetune_config, "base FinetuneConfig JSON file");
    ab->add_option("--grid-m", aa.grid_m, "comma list of behavior pool sizes");
    ab->add_option("--grid-u", aa.grid_u, "comma list of sequence pool sizes");
    ab->add_option("--grid-interval", aa.grid_interval, "comma list of update intervals");
    ab->add_option("--grid-mode", aa.grid_mode, "comma list of sampling modes");
    ab->add_option("--grid-label-fraction", aa.grid_label_fraction,
                   "comma list of label fractions");
    ab->add_option("--seed", aa.seed, "RNG seed for every cell");
    ab->add_option("--steps", aa.steps, "pre-training steps per cell");
    ab->add_option("--inspect-steps", aa.inspect_steps, "steps for the similarity probe");
    ab->callback([&] { rc = run_ablate(*ab, aa); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return rc;
}
