#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_set>

#include "data.hpp"

using namespace ub;
using data::BehaviorEvent;
using data::BehaviorLog;
using data::Corpus;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("tmp_data_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
    void write(const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        out << text;
    }
};

BehaviorLog log_of(std::string uid, std::vector<std::pair<std::int64_t, int>> evs) {
    BehaviorLog log;
    log.user_id = std::move(uid);
    for (auto [ts, id] : evs) log.events.push_back({ts, id});
    return log;
}

}  // namespace

TEST_CASE("load_logs: empty file gives an empty corpus") {
    TempFile f("empty.tsv");
    f.write("");
    Corpus c = data::load_logs(f.path);
    CHECK(c.logs.empty());
}

TEST_CASE("load_logs: interleaved users come back grouped and time-sorted") {
    TempFile f("interleaved.tsv");
    f.write(
        "# userbert-log v1 vocab=50\n"
        "ua\t30\t5\n"
        "ub\t10\t6\n"
        "ua\t10\t7\n"
        "ub\t40\t8\n"
        "ua\t20\t9\n"
        "ub\t20\t10\n");
    Corpus c = data::load_logs(f.path);
    REQUIRE(c.logs.size() == 2);
    CHECK(c.vocab_size == 50);
    CHECK(c.logs[0].user_id == "ua");
    CHECK(c.logs[1].user_id == "ub");
    REQUIRE(c.logs[0].events.size() == 3);
    CHECK(c.logs[0].events[0].id == 7);
    CHECK(c.logs[0].events[1].id == 9);
    CHECK(c.logs[0].events[2].id == 5);
    CHECK(c.logs[1].events[0].id == 6);
    CHECK(c.logs[1].events[2].id == 8);
}

TEST_CASE("load_logs: 150 events truncate to the 100 most recent") {
    TempFile f("trunc.tsv");
    std::string text = "# userbert-log v1 vocab=10\n";
    for (int i = 1; i <= 150; ++i)
        text += "u\t" + std::to_string(i) + "\t" + std::to_string(2 + i % 10) + "\n";
    f.write(text);
    Corpus c = data::load_logs(f.path, 100);
    REQUIRE(c.logs.size() == 1);
    REQUIRE(c.logs[0].events.size() == 100);
    CHECK(c.logs[0].events.front().ts == 51);
    CHECK(c.logs[0].events.back().ts == 150);
}

TEST_CASE("load_logs: malformed input names the line") {
    TempFile f("bad.tsv");
    f.write("# userbert-log v1 vocab=10\nu\t1\t5\nu\tnotanumber\t5\n");
    try {
        data::load_logs(f.path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    TempFile g("badid.tsv");
    g.write("# userbert-log v1 vocab=10\nu\t1\t13\n");  // ids end at 11
    CHECK_THROWS_AS(data::load_logs(g.path), DataError);
    TempFile h("padid.tsv");
    h.write("# userbert-log v1 vocab=10\nu\t1\t0\n");
    CHECK_THROWS_AS(data::load_logs(h.path), DataError);
    TempFile i("noversion.tsv");
    i.write("u\t1\t5\n");
    CHECK_THROWS_AS(data::load_logs(i.path), DataError);
}

TEST_CASE("save then load is the identity on normalized logs") {
    Corpus c;
    c.vocab_size = 30;
    c.logs.push_back(log_of("alice", {{1, 5}, {2, 9}, {5, 20}}));
    c.logs.push_back(log_of("bob", {{3, 2}, {3, 7}, {9, 31}}));
    TempFile f("roundtrip.tsv");
    data::save_logs(c, f.path);
    Corpus back = data::load_logs(f.path);
    REQUIRE(back.logs.size() == 2);
    CHECK(back.vocab_size == 30);
    for (std::size_t u = 0; u < 2; ++u) {
        CHECK(back.logs[u].user_id == c.logs[u].user_id);
        REQUIRE(back.logs[u].events.size() == c.logs[u].events.size());
        for (std::size_t e = 0; e < c.logs[u].events.size(); ++e) {
            CHECK(back.logs[u].events[e].ts == c.logs[u].events[e].ts);
            CHECK(back.logs[u].events[e].id == c.logs[u].events[e].id);
        }
    }
}

TEST_CASE("window_from_events keeps the most recent max_len events") {
    std::vector<BehaviorEvent> evs;
    for (int i = 1; i <= 10; ++i) evs.push_back({i, 2 + i});
    model::BehaviorSequence s = data::window_from_events(evs, 4);
    CHECK(s.valid_len == 4);
    CHECK(s.ids[0] == 9);
    CHECK(s.ids[3] == 12);
    CHECK(s.timestamps[0] == 7);
    model::BehaviorSequence full = data::window_from_events(evs, 16);
    CHECK(full.valid_len == 10);
    CHECK(full.ids[10] == model::kPadId);
}

TEST_CASE("mask counts follow max(1, floor(rate * len))") {
    Rng rng(1);
    std::vector<BehaviorEvent> evs;
    for (int i = 1; i <= 5; ++i) evs.push_back({i, 3});
    auto m5 = data::mask_sequence(data::window_from_events(evs, 8), rng);
    CHECK(m5.masked_positions.size() == 1);
    evs.clear();
    for (int i = 1; i <= 30; ++i) evs.push_back({i, 3});
    auto m30 = data::mask_sequence(data::window_from_events(evs, 32), rng);
    CHECK(m30.masked_positions.size() == 3);
    for (std::size_t p : m30.masked_positions) {
        CHECK(p < 30);
        CHECK(m30.seq.ids[p] == model::kMaskId);
    }
    std::set<std::size_t> uniq(m30.masked_positions.begin(), m30.masked_positions.end());
    CHECK(uniq.size() == m30.masked_positions.size());
}

TEST_CASE("masking is uniform: each position hit 10% +/- 1% over 10k draws") {
    Rng rng(7);
    std::vector<BehaviorEvent> evs;
    for (int i = 1; i <= 20; ++i) evs.push_back({i, 4});
    model::BehaviorSequence seq = data::window_from_events(evs, 20);
    std::vector<int> hits(20, 0);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        auto inst = data::mask_sequence(seq, rng);
        REQUIRE(inst.masked_positions.size() == 2);
        for (std::size_t p : inst.masked_positions) hits[p]++;
    }
    for (int h : hits) {
        const double freq = static_cast<double>(h) / draws;
        CHECK(freq == doctest::Approx(0.10).epsilon(0.1));  // 0.10 +/- 0.01
    }
}

TEST_CASE("time-disjoint split follows the quantile and tie rules") {
    auto pair1 = data::split_time_disjoint(
        log_of("u", {{1, 3}, {2, 3}, {3, 3}, {4, 3}}), 0.5, 8);
    CHECK(pair1.seq_a.valid_len == 2);
    CHECK(pair1.seq_b.valid_len == 2);
    CHECK(pair1.seq_a.timestamps[1] == 2);
    CHECK(pair1.seq_b.timestamps[0] == 3);

    auto pair2 = data::split_time_disjoint(
        log_of("u", {{1, 3}, {1, 3}, {1, 3}, {9, 3}}), 0.5, 8);
    CHECK(pair2.seq_a.valid_len == 3);
    CHECK(pair2.seq_b.valid_len == 1);
    CHECK(pair2.seq_b.timestamps[0] == 9);

    CHECK_THROWS_AS(data::split_time_disjoint(log_of("u", {{7, 3}, {7, 3}, {7, 3}}), 0.5, 8),
                    SplitInfeasible);
}

TEST_CASE("every emitted pair is strictly time-disjoint (randomized)") {
    Rng rng(13);
    int produced = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 2 + rng.uniform_below(12);
        BehaviorLog log;
        log.user_id = "u";
        std::int64_t t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            t += static_cast<std::int64_t>(rng.uniform_below(3));  // duplicates likely
            log.events.push_back({t, 5});
        }
        try {
            auto pair = data::split_time_disjoint(log, 0.25 + 0.5 * rng.uniform(), 16);
            ++produced;
            const std::int64_t max_a = pair.seq_a.timestamps[pair.seq_a.valid_len - 1];
            const std::int64_t min_b = pair.seq_b.timestamps[0];
            CHECK(max_a < min_b);
        } catch (const SplitInfeasible&) {
        }
    }
    CHECK(produced > 500);
}

TEST_CASE("synthetic generator: zero noise and one topic stays inside one slice") {
    data::SynthConfig cfg;
    cfg.n_users = 20;
    cfg.vocab_size = 80;
    cfg.n_topics = 8;
    cfg.interests_per_user = 1;
    cfg.events_per_user = 40;
    cfg.behavior_noise = 0.0;
    cfg.seed = 5;
    data::TruthTable truth;
    Corpus c = data::generate_synthetic(cfg, &truth);
    for (const BehaviorLog& log : c.logs) {
        const int topic = truth.topics.at(log.user_id)[0];
        for (const BehaviorEvent& ev : log.events)
            CHECK(data::topic_of_id(ev.id, cfg.vocab_size, cfg.n_topics) == topic);
    }
}

TEST_CASE("synthetic generator: full noise is uniform (chi-square at alpha=0.01)") {
    data::SynthConfig cfg;
    cfg.n_users = 1000;
    cfg.vocab_size = 96;
    cfg.n_topics = 8;
    cfg.events_per_user = 100;
    cfg.behavior_noise = 1.0;
    cfg.seed = 9;
    Corpus c = data::generate_synthetic(cfg, nullptr);
    std::vector<std::size_t> counts(cfg.vocab_size, 0);
    std::size_t total = 0;
    for (const auto& log : c.logs)
        for (const auto& ev : log.events) {
            counts[static_cast<std::size_t>(ev.id - 2)]++;
            ++total;
        }
    CHECK(total == 100000);
    const double expect = static_cast<double>(total) / static_cast<double>(cfg.vocab_size);
    double chi2 = 0.0;
    for (std::size_t k : counts) {
        const double d = static_cast<double>(k) - expect;
        chi2 += d * d / expect;
    }
    CHECK(chi2 < 130.0);  // chi-square 0.99 quantile at 95 dof
}

TEST_CASE("synthetic generator: default config in-topic fraction is 0.925 +/- 0.01") {
    data::SynthConfig cfg;  // defaults: 2000 users, vocab 1000, 8 topics, 2 interests
    data::TruthTable truth;
    Corpus c = data::generate_synthetic(cfg, &truth);
    std::size_t inside = 0, total = 0;
    for (const auto& log : c.logs) {
        const std::vector<int>& topics = truth.topics.at(log.user_id);
        for (const auto& ev : log.events) {
            const int t = data::topic_of_id(ev.id, cfg.vocab_size, cfg.n_topics);
            inside += std::count(topics.begin(), topics.end(), t) > 0 ? 1 : 0;
            ++total;
        }
    }
    const double frac = static_cast<double>(inside) / static_cast<double>(total);
    CHECK(frac == doctest::Approx(0.925).epsilon(0.0109));
}

TEST_CASE("synthetic generator is bitwise reproducible and timestamps increase") {
    data::SynthConfig cfg;
    cfg.n_users = 30;
    cfg.vocab_size = 64;
    cfg.events_per_user = 25;
    cfg.seed = 123;
    data::TruthTable t1, t2;
    Corpus a = data::generate_synthetic(cfg, &t1);
    Corpus b = data::generate_synthetic(cfg, &t2);
    REQUIRE(a.logs.size() == b.logs.size());
    for (std::size_t u = 0; u < a.logs.size(); ++u) {
        CHECK(a.logs[u].user_id == b.logs[u].user_id);
        for (std::size_t e = 0; e < a.logs[u].events.size(); ++e) {
            CHECK(a.logs[u].events[e].id == b.logs[u].events[e].id);
            CHECK(a.logs[u].events[e].ts == static_cast<std::int64_t>(e + 1));
        }
    }
    CHECK(t1.topics == t2.topics);
}

TEST_CASE("truth table round trip") {
    data::TruthTable t;
    t.n_topics = 8;
    t.vocab_size = 96;
    t.topics["ua"] = {1, 5};
    t.topics["ub"] = {0, 7};
    TempFile f("truth.tsv");
    data::save_truth(t, f.path);
    data::TruthTable back = data::load_truth(f.path);
    CHECK(back.n_topics == 8);
    CHECK(back.vocab_size == 96);
    CHECK(back.topics == t.topics);
}

TEST_CASE("downstream labels are balanced, unseen positives, off-topic negatives") {
    data::SynthConfig cfg;
    cfg.n_users = 100;
    cfg.vocab_size = 96;
    cfg.events_per_user = 30;
    cfg.seed = 3;
    data::TruthTable truth;
    Corpus c = data::generate_synthetic(cfg, &truth);
    Rng rng(77);
    auto labels = data::make_downstream_labels(c, truth, rng, 6);
    REQUIRE(!labels.empty());
    std::size_t pos = 0;
    for (const auto& ex : labels) {
        const auto& log = c.logs[ex.user_index];
        const auto& topics = truth.topics.at(log.user_id);
        const int t = data::topic_of_id(ex.candidate_id, cfg.vocab_size, cfg.n_topics);
        const bool on_topic = std::count(topics.begin(), topics.end(), t) > 0;
        if (ex.label == 1) {
            ++pos;
            CHECK(on_topic);
            std::unordered_set<int> seen;
            for (const auto& ev : log.events) seen.insert(ev.id);
            CHECK(!seen.count(ex.candidate_id));
        } else {
            CHECK(!on_topic);
        }
    }
    CHECK(pos * 2 == labels.size());
}
