#include "io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "errors.hpp"

namespace ub::io {

namespace {

using nlohmann::json;

constexpr const char* kCheckpointMagic = "UBCK v1";

void require_little_endian() {
    const std::uint16_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) throw IoError("checkpoint format requires a little-endian host");
}

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

}  // namespace

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void save_checkpoint(const std::string& path, const model::ModelParams& params,
                     const TrainConfig& cfg, const std::string& data_hash) {
    require_little_endian();
    json groups = json::array();
    for (const num::ParamGroup* g : params.groups()) {
        groups.push_back(json{{"name", g->name},
                              {"rows", g->value.rows()},
                              {"cols", g->value.cols()},
                              {"count", g->value.size()}});
    }
    json header{{"config", cfg.to_json()},
                {"fingerprint", cfg.fingerprint()},
                {"data_hash", data_hash},
                {"groups", groups}};
    std::ofstream out = open_out(path, true);
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (const num::ParamGroup* g : params.groups())
        out.write(reinterpret_cast<const char*>(g->value.data()),
                  static_cast<std::streamsize>(g->value.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string magic, header_line;
    if (!std::getline(in, magic) || magic != kCheckpointMagic)
        throw IoError("not a checkpoint (bad magic): " + path);
    if (!std::getline(in, header_line)) throw IoError("truncated checkpoint header: " + path);

    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint header: " + std::string(e.what()));
    }

    Checkpoint ck;
    ck.cfg = TrainConfig::from_json(header.at("config"));
    if (header.at("fingerprint").get<std::string>() != ck.cfg.fingerprint())
        throw IoError("checkpoint fingerprint does not match its config: " + path);
    ck.data_hash = header.value("data_hash", std::string());

    model::ModelConfig mc{ck.cfg.hidden_dim, ck.cfg.query_dim, ck.cfg.heads,
                          ck.cfg.max_len,    ck.cfg.vocab_size, ck.cfg.mean_pooling};
    Rng scratch(0);
    ck.params = model::ModelParams::init(mc, ck.cfg.init_scale, scratch);

    std::vector<num::ParamGroup*> groups = ck.params.groups();
    const json& jgroups = header.at("groups");
    if (jgroups.size() != groups.size())
        throw IoError("checkpoint group count mismatch: " + path);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const json& jg = jgroups.at(i);
        num::ParamGroup* g = groups[i];
        if (jg.at("name").get<std::string>() != g->name ||
            jg.at("rows").get<std::size_t>() != g->value.rows() ||
            jg.at("cols").get<std::size_t>() != g->value.cols())
            throw IoError("checkpoint group '" + jg.at("name").get<std::string>() +
                          "' does not match the config shapes: " + path);
        in.read(reinterpret_cast<char*>(g->value.data()),
                static_cast<std::streamsize>(g->value.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(g->value.size() * sizeof(double)))
            throw IoError("truncated checkpoint payload: " + path);
        g->value.check_finite(g->name);
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw IoError("trailing bytes after checkpoint payload: " + path);
    return ck;
}

void write_metrics_log(const std::string& path, const std::vector<pretrain::StepRecord>& log,
                       const std::string& fingerprint) {
    std::ofstream out = open_out(path, false);
    out << "# userbert-metrics v1 fingerprint=" << fingerprint << '\n';
    out << "step\tloss_total\tloss_mbp\tloss_bsm\tmbp_acc\tbsm_acc\tpool_refresh\n";
    for (const pretrain::StepRecord& r : log) {
        out << r.step << '\t' << fmt_double(r.loss_total) << '\t' << fmt_double(r.loss_mbp)
            << '\t' << fmt_double(r.loss_bsm) << '\t' << fmt_double(r.mbp_acc) << '\t'
            << fmt_double(r.bsm_acc) << '\t' << (r.pool_refreshed ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_eval_report(const std::string& path, const downstream::EvalReport& report,
                       const std::string& fingerprint, const std::string& checkpoint_hash) {
    std::ofstream out = open_out(path, false);
    out << "# userbert-eval v1 fingerprint=" << fingerprint << '\n';
    out << "checkpoint_hash\t" << checkpoint_hash << '\n';
    out << "auc\t" << fmt_double(report.auc) << '\n';
    out << "ndcg_at_10\t" << fmt_double(report.ndcg_at_10) << '\n';
    out << "ap\t" << fmt_double(report.ap) << '\n';
    out << "n_examples\t" << report.n_examples << '\n';
    out << "n_queries\t" << report.n_queries << '\n';
    out << "n_skipped_queries\t" << report.n_skipped_queries << '\n';
    if (!out) throw IoError("write failed: " + path);
}

void write_neg_dump(const std::string& path, const std::vector<pretrain::NegDumpLine>& lines,
                    const std::string& fingerprint) {
    std::ofstream out = open_out(path, false);
    out << "# userbert-negdump v1 fingerprint=" << fingerprint << '\n';
    out << "step\ttask\ttarget\tnegative\tscore\n";
    for (const pretrain::NegDumpLine& l : lines)
        out << l.step << '\t' << l.task << '\t' << l.target << '\t' << l.negative << '\t'
            << fmt_double(l.score) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

data::SynthConfig synth_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("SynthConfig: expected a JSON object");
    static const char* known[] = {"n_users",           "vocab_size", "n_topics",
                                  "interests_per_user", "events_per_user",
                                  "behavior_noise",    "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("SynthConfig: unknown key '" + it.key() + "'");
    }
    data::SynthConfig c;
    try {
        if (j.contains("n_users")) c.n_users = j.at("n_users").get<std::size_t>();
        if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<std::size_t>();
        if (j.contains("n_topics")) c.n_topics = j.at("n_topics").get<std::size_t>();
        if (j.contains("interests_per_user"))
            c.interests_per_user = j.at("interests_per_user").get<std::size_t>();
        if (j.contains("events_per_user"))
            c.events_per_user = j.at("events_per_user").get<std::size_t>();
        if (j.contains("behavior_noise")) c.behavior_noise = j.at("behavior_noise").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("SynthConfig: ") + e.what());
    }
    c.validate();
    return c;
}

data::SynthConfig synth_config_from_json_text(const std::string& text) {
    try {
        return synth_config_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("SynthConfig: ") + e.what());
    }
}

nlohmann::json synth_config_to_json(const data::SynthConfig& cfg) {
    return json{{"n_users", cfg.n_users},
                {"vocab_size", cfg.vocab_size},
                {"n_topics", cfg.n_topics},
                {"interests_per_user", cfg.interests_per_user},
                {"events_per_user", cfg.events_per_user},
                {"behavior_noise", cfg.behavior_noise},
                {"seed", cfg.seed}};
}

}  // namespace ub::io
