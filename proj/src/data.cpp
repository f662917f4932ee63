#include "data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace ub::data {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

std::int64_t parse_int(const std::string& s, const std::string& what, std::size_t line_no) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

}  // namespace

Corpus load_logs(const std::string& path, std::size_t max_behaviors) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open log file: " + path);
    std::string line;
    std::size_t line_no = 0;
    std::size_t vocab = 0;
    bool version_seen = false;
    std::unordered_map<std::string, std::vector<BehaviorEvent>> by_user;
    std::vector<std::string> order;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (!version_seen && line.find(kLogFormatVersion) != std::string::npos) {
                version_seen = true;
                std::size_t vp = line.find("vocab=");
                if (vp != std::string::npos)
                    vocab = static_cast<std::size_t>(
                        parse_int(line.substr(vp + 6), "vocab size", line_no));
            }
            continue;
        }
        if (!version_seen)
            throw DataError("line " + std::to_string(line_no) +
                            ": missing version line '# " + std::string(kLogFormatVersion) + "'");
        std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != 3)
            throw DataError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        BehaviorEvent ev;
        ev.ts = parse_int(cols[1], "timestamp", line_no);
        ev.id = static_cast<int>(parse_int(cols[2], "behavior id", line_no));
        if (ev.id < model::kFirstBehaviorId)
            throw DataError("line " + std::to_string(line_no) + ": behavior id " +
                            std::to_string(ev.id) + " below " +
                            std::to_string(model::kFirstBehaviorId));
        if (vocab > 0 && static_cast<std::size_t>(ev.id) >= vocab + 2)
            throw DataError("line " + std::to_string(line_no) + ": behavior id " +
                            std::to_string(ev.id) + " outside vocabulary of " +
                            std::to_string(vocab));
        auto [it, inserted] = by_user.try_emplace(cols[0]);
        if (inserted) order.push_back(cols[0]);
        it->second.push_back(ev);
    }
    Corpus corpus;
    corpus.vocab_size = vocab;
    std::sort(order.begin(), order.end());
    for (const std::string& uid : order) {
        BehaviorLog log;
        log.user_id = uid;
        log.events = std::move(by_user[uid]);
        std::stable_sort(log.events.begin(), log.events.end(),
                         [](const BehaviorEvent& a, const BehaviorEvent& b) { return a.ts < b.ts; });
        if (log.events.size() > max_behaviors)
            log.events.erase(log.events.begin(),
                             log.events.end() - static_cast<std::ptrdiff_t>(max_behaviors));
        corpus.logs.push_back(std::move(log));
    }
    return corpus;
}

void save_logs(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write log file: " + path);
    out << "# " << kLogFormatVersion;
    if (corpus.vocab_size > 0) out << " vocab=" << corpus.vocab_size;
    out << "\n";
    for (const BehaviorLog& log : corpus.logs)
        for (const BehaviorEvent& ev : log.events)
            out << log.user_id << '\t' << ev.ts << '\t' << ev.id << '\n';
    if (!out) throw IoError("write failed: " + path);
}

model::BehaviorSequence window_from_events(const std::vector<BehaviorEvent>& events,
                                           std::size_t max_len) {
    if (events.empty()) throw ContractViolation("window_from_events: no events");
    const std::size_t n = std::min(events.size(), max_len);
    model::BehaviorSequence seq;
    seq.ids.assign(max_len, model::kPadId);
    seq.timestamps.assign(max_len, 0);
    seq.valid_len = n;
    const std::size_t offset = events.size() - n;
    for (std::size_t k = 0; k < n; ++k) {
        seq.ids[k] = events[offset + k].id;
        seq.timestamps[k] = events[offset + k].ts;
    }
    return seq;
}

MaskedInstance mask_sequence(const model::BehaviorSequence& seq, Rng& rng, double mask_rate) {
    seq.validate();
    const std::size_t n_mask = std::max<std::size_t>(
        1, static_cast<std::size_t>(mask_rate * static_cast<double>(seq.valid_len)));
    MaskedInstance inst;
    inst.seq = seq;
    std::vector<std::size_t> picks = rng.sample_without_replacement(seq.valid_len, n_mask);
    std::sort(picks.begin(), picks.end());
    for (std::size_t pos : picks) {
        inst.masked_positions.push_back(pos);
        inst.masked_true_ids.push_back(seq.ids[pos]);
        inst.seq.ids[pos] = model::kMaskId;
    }
    return inst;
}

namespace {

// Quantile with ties pushed into the first period; steps the boundary down
// when the second period would be empty.
std::int64_t boundary_from_sorted(const std::vector<std::int64_t>& ts, double fraction) {
    if (ts.front() == ts.back())
        throw SplitInfeasible("all timestamps equal (" + std::to_string(ts.front()) + ")");
    const std::size_t n = ts.size();
    std::size_t k = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;
    std::int64_t t_star = ts[k - 1];
    if (t_star >= ts.back()) {
        // largest timestamp strictly below the maximum
        t_star = ts.front();
        for (std::int64_t t : ts)
            if (t < ts.back()) t_star = std::max(t_star, t);
    }
    return t_star;
}

}  // namespace

std::optional<SequencePair> split_at_boundary(const BehaviorLog& log, std::int64_t t_star,
                                              std::size_t max_len) {
    std::vector<BehaviorEvent> a, b;
    for (const BehaviorEvent& ev : log.events)
        (ev.ts <= t_star ? a : b).push_back(ev);
    if (a.empty() || b.empty()) return std::nullopt;
    SequencePair pair;
    pair.seq_a = window_from_events(a, max_len);
    pair.seq_b = window_from_events(b, max_len);
    pair.same_user = true;
    return pair;
}

SequencePair split_time_disjoint(const BehaviorLog& log, double boundary_fraction,
                                 std::size_t max_len) {
    if (log.events.size() < 2)
        throw ContractViolation("split_time_disjoint: need >= 2 events, user " + log.user_id);
    std::vector<std::int64_t> ts;
    ts.reserve(log.events.size());
    for (const BehaviorEvent& ev : log.events) ts.push_back(ev.ts);
    std::sort(ts.begin(), ts.end());
    const std::int64_t t_star = boundary_from_sorted(ts, boundary_fraction);
    auto pair = split_at_boundary(log, t_star, max_len);
    if (!pair) throw SplitInfeasible("degenerate split for user " + log.user_id);
    return *pair;
}

std::int64_t corpus_boundary(const Corpus& corpus, double fraction) {
    std::vector<std::int64_t> ts;
    for (const BehaviorLog& log : corpus.logs)
        for (const BehaviorEvent& ev : log.events) ts.push_back(ev.ts);
    if (ts.empty()) throw DataError("corpus_boundary: empty corpus");
    std::sort(ts.begin(), ts.end());
    return boundary_from_sorted(ts, fraction);
}

void SynthConfig::validate() const {
    if (n_users == 0) throw ConfigError("SynthConfig: n_users must be positive");
    if (vocab_size == 0) throw ConfigError("SynthConfig: vocab_size must be positive");
    if (n_topics == 0) throw ConfigError("SynthConfig: n_topics must be positive");
    if (interests_per_user == 0)
        throw ConfigError("SynthConfig: interests_per_user must be positive");
    if (events_per_user == 0)
        throw ConfigError("SynthConfig: events_per_user must be positive");
    if (interests_per_user > n_topics)
        throw ConfigError("SynthConfig: interests_per_user exceeds n_topics");
    if (vocab_size % n_topics != 0)
        throw ConfigError("SynthConfig: vocab_size must be divisible by n_topics");
    if (behavior_noise < 0.0 || behavior_noise > 1.0)
        throw ConfigError("SynthConfig: behavior_noise must be in [0,1]");
}

int topic_of_id(int behavior_id, std::size_t vocab_size, std::size_t n_topics) {
    const std::size_t slice = vocab_size / n_topics;
    return static_cast<int>((static_cast<std::size_t>(behavior_id) - 2) / slice);
}

Corpus generate_synthetic(const SynthConfig& cfg, TruthTable* truth) {
    cfg.validate();
    const std::size_t slice = cfg.slice_size();
    Corpus corpus;
    corpus.vocab_size = cfg.vocab_size;
    if (truth) {
        truth->n_topics = cfg.n_topics;
        truth->vocab_size = cfg.vocab_size;
        truth->topics.clear();
    }
    const int width = static_cast<int>(std::to_string(cfg.n_users - 1).size());
    for (std::size_t ui = 0; ui < cfg.n_users; ++ui) {
        std::string uid = std::to_string(ui);
        uid = "u" + std::string(static_cast<std::size_t>(width) - uid.size(), '0') + uid;
        Rng rng = Rng::derive(cfg.seed, uid);
        std::vector<std::size_t> ts = rng.sample_without_replacement(cfg.n_topics,
                                                                     cfg.interests_per_user);
        std::vector<int> topics(ts.begin(), ts.end());
        std::sort(topics.begin(), topics.end());
        BehaviorLog log;
        log.user_id = uid;
        for (std::size_t e = 0; e < cfg.events_per_user; ++e) {
            int id;
            if (rng.uniform() < cfg.behavior_noise) {
                id = 2 + static_cast<int>(rng.uniform_below(cfg.vocab_size));
            } else {
                const int topic = topics[rng.uniform_below(topics.size())];
                id = 2 + static_cast<int>(static_cast<std::size_t>(topic) * slice +
                                          rng.uniform_below(slice));
            }
            log.events.push_back({static_cast<std::int64_t>(e + 1), id});
        }
        if (truth) truth->topics[uid] = topics;
        corpus.logs.push_back(std::move(log));
    }
    return corpus;
}

void save_truth(const TruthTable& truth, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write truth file: " + path);
    out << "# " << kTruthFormatVersion << " topics=" << truth.n_topics
        << " vocab=" << truth.vocab_size << "\n";
    for (const auto& [uid, topics] : truth.topics) {
        out << uid << '\t';
        for (std::size_t i = 0; i < topics.size(); ++i) {
            if (i) out << ',';
            out << topics[i];
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

TruthTable load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open truth file: " + path);
    TruthTable truth;
    std::string line;
    std::size_t line_no = 0;
    bool version_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (!version_seen && line.find(kTruthFormatVersion) != std::string::npos) {
                version_seen = true;
                std::size_t tp = line.find("topics=");
                if (tp != std::string::npos)
                    truth.n_topics = static_cast<std::size_t>(
                        parse_int(line.substr(tp + 7, line.find(' ', tp) - tp - 7), "topics",
                                  line_no));
                std::size_t vp = line.find("vocab=");
                if (vp != std::string::npos)
                    truth.vocab_size = static_cast<std::size_t>(
                        parse_int(line.substr(vp + 6), "vocab", line_no));
            }
            continue;
        }
        if (!version_seen)
            throw DataError("truth file missing version line: " + path);
        std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != 2)
            throw DataError("truth line " + std::to_string(line_no) + ": expected 2 fields");
        std::vector<int> topics;
        std::stringstream ss(cols[1]);
        std::string tok;
        while (std::getline(ss, tok, ','))
            topics.push_back(static_cast<int>(parse_int(tok, "topic", line_no)));
        truth.topics[cols[0]] = std::move(topics);
    }
    return truth;
}

std::vector<LabeledExample> make_downstream_labels(const Corpus& corpus,
                                                   const TruthTable& truth, Rng& rng,
                                                   std::size_t pairs_per_user) {
    if (truth.n_topics == 0 || truth.vocab_size == 0)
        throw DataError("make_downstream_labels: truth table missing topic/vocab counts");
    const std::size_t slice = truth.vocab_size / truth.n_topics;
    std::vector<LabeledExample> out;
    for (std::size_t ui = 0; ui < corpus.logs.size(); ++ui) {
        const BehaviorLog& log = corpus.logs[ui];
        auto it = truth.topics.find(log.user_id);
        if (it == truth.topics.end()) continue;
        const std::vector<int>& topics = it->second;
        std::unordered_set<int> seen;
        for (const BehaviorEvent& ev : log.events) seen.insert(ev.id);
        std::vector<int> pos_candidates;
        for (int t : topics)
            for (std::size_t j = 0; j < slice; ++j) {
                const int id = 2 + static_cast<int>(static_cast<std::size_t>(t) * slice + j);
                if (!seen.count(id)) pos_candidates.push_back(id);
            }
        std::vector<int> neg_candidates;
        std::set<int> topic_set(topics.begin(), topics.end());
        for (std::size_t t = 0; t < truth.n_topics; ++t) {
            if (topic_set.count(static_cast<int>(t))) continue;
            for (std::size_t j = 0; j < slice; ++j)
                neg_candidates.push_back(2 + static_cast<int>(t * slice + j));
        }
        const std::size_t n = std::min({pairs_per_user, pos_candidates.size(),
                                        neg_candidates.size()});
        if (n == 0) continue;
        for (std::size_t idx : rng.sample_without_replacement(pos_candidates.size(), n))
            out.push_back({ui, pos_candidates[idx], 1});
        for (std::size_t idx : rng.sample_without_replacement(neg_candidates.size(), n))
            out.push_back({ui, neg_candidates[idx], 0});
    }
    return out;
}

}  // namespace ub::data
