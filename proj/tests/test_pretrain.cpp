#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "pretrain.hpp"

using namespace ub;
using pretrain::BsmBatch;
using pretrain::BsmPair;
using pretrain::MbpBatch;
using pretrain::MbpInstance;
using pretrain::MbpSlot;

namespace {

model::ModelConfig small_mc() {
    model::ModelConfig c;
    c.hidden_dim = 8;
    c.query_dim = 6;
    c.heads = 2;
    c.max_len = 8;
    c.vocab_size = 20;
    return c;
}

TrainConfig small_tc() {
    TrainConfig c;
    c.hidden_dim = 8;
    c.query_dim = 6;
    c.heads = 2;
    c.max_len = 8;
    c.vocab_size = 20;
    c.negatives_k = 2;
    c.negatives_p = 2;
    c.behavior_pool_m = 10;
    c.sequence_pool_u = 6;
    c.update_interval = 5;
    c.batch_size = 4;
    c.steps = 20;
    return c;
}

model::BehaviorSequence seq_of(std::vector<int> ids, std::size_t max_len) {
    model::BehaviorSequence s;
    s.ids = ids;
    s.ids.resize(max_len, model::kPadId);
    s.valid_len = ids.size();
    s.timestamps.assign(max_len, 0);
    for (std::size_t i = 0; i < ids.size(); ++i)
        s.timestamps[i] = static_cast<std::int64_t>(i + 1);
    return s;
}

MbpBatch small_mbp_batch() {
    MbpBatch b;
    MbpInstance inst;
    inst.seq = seq_of({4, model::kMaskId, 9, 13}, 8);
    inst.slots.push_back({1, {7, 5, 11}, 0});  // true id 7
    b.instances.push_back(inst);
    MbpInstance inst2;
    inst2.seq = seq_of({model::kMaskId, 6}, 8);
    inst2.slots.push_back({0, {3, 10, 8}, 2});  // true id 8
    b.instances.push_back(inst2);
    return b;
}

BsmBatch small_bsm_batch() {
    BsmBatch b;
    BsmPair pair;
    pair.user_id = "ua";
    pair.target = seq_of({4, 9}, 8);
    pair.candidates = {seq_of({5, 11}, 8), seq_of({4, 10}, 8), seq_of({13, 6}, 8)};
    pair.label = 1;
    b.pairs.push_back(pair);
    return b;
}

data::Corpus synth_corpus(std::size_t n_users = 30, std::uint64_t seed = 5) {
    data::SynthConfig cfg;
    cfg.n_users = n_users;
    cfg.vocab_size = 20;
    cfg.n_topics = 4;
    cfg.events_per_user = 12;
    cfg.seed = seed;
    return data::generate_synthetic(cfg, nullptr);
}

bool params_equal(const model::ModelParams& a, const model::ModelParams& b) {
    auto ga = a.groups(), gb = b.groups();
    for (std::size_t g = 0; g < ga.size(); ++g)
        for (std::size_t i = 0; i < ga[g]->value.size(); ++i)
            if (ga[g]->value.data()[i] != gb[g]->value.data()[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("identical candidate embeddings give exactly ln(K+1)") {
    Rng rng(1);
    model::ModelParams p = model::ModelParams::init(small_mc(), 0.05, rng);
    for (int id : {7, 5, 11, 3, 10, 8})
        for (std::size_t j = 0; j < 8; ++j)
            p.id_embedding.value.at(static_cast<std::size_t>(id), j) =
                p.id_embedding.value.at(7, j);
    const double loss = pretrain::mbp_loss(small_mbp_batch(), p, false);
    CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("a fixed batch is learnable: joint loss falls well below uniform") {
    Rng rng(2);
    model::ModelParams p = model::ModelParams::init(small_mc(), 0.05, rng);
    TrainConfig cfg = small_tc();
    const MbpBatch mbp = small_mbp_batch();
    const BsmBatch bsm = small_bsm_batch();
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 300; ++step) {
        auto losses = pretrain::joint_step(mbp, bsm, p, cfg);
        if (step == 0) first = losses.total;
        last = losses.total;
    }
    CHECK(first > 2.0);  // two roughly uniform 3-way problems
    CHECK(last < 0.1 * first);
}

TEST_CASE("joint loss and gradients decompose into the two task terms bitwise") {
    Rng rng(3);
    model::ModelParams base = model::ModelParams::init(small_mc(), 0.05, rng);
    const MbpBatch mbp = small_mbp_batch();
    const BsmBatch bsm = small_bsm_batch();

    model::ModelParams pa = base.clone();
    const double la = pretrain::mbp_loss(mbp, pa, true);
    model::ModelParams pb = base.clone();
    const double lb = pretrain::bsm_loss(bsm, pb, true);

    model::ModelParams pj = base.clone();
    const double ja = pretrain::mbp_loss(mbp, pj, true);
    const double jb = pretrain::bsm_loss(bsm, pj, true);
    CHECK(ja == la);
    CHECK(jb == lb);

    auto ga = pa.groups();
    auto gb = pb.groups();
    auto gj = pj.groups();
    for (std::size_t g = 0; g < gj.size(); ++g)
        for (std::size_t i = 0; i < gj[g]->grad.size(); ++i)
            CHECK(gj[g]->grad.data()[i] ==
                  ga[g]->grad.data()[i] + gb[g]->grad.data()[i]);
}

TEST_CASE("moving the positive inside the candidate list leaves the loss unchanged") {
    Rng rng(4);
    model::ModelParams p = model::ModelParams::init(small_mc(), 0.05, rng);
    MbpBatch a;
    MbpInstance inst;
    inst.seq = seq_of({4, model::kMaskId, 9}, 8);
    inst.slots.push_back({1, {7, 5, 11}, 0});
    a.instances.push_back(inst);
    MbpBatch b = a;
    b.instances[0].slots[0].candidates = {5, 11, 7};
    b.instances[0].slots[0].label = 2;
    const double la = pretrain::mbp_loss(a, p, false);
    const double lb = pretrain::mbp_loss(b, p, false);
    CHECK(la == doctest::Approx(lb).epsilon(1e-13));

    BsmBatch ba = small_bsm_batch();
    BsmBatch bb = ba;
    std::swap(bb.pairs[0].candidates[0], bb.pairs[0].candidates[1]);
    bb.pairs[0].label = 0;
    CHECK(pretrain::bsm_loss(ba, p, false) ==
          doctest::Approx(pretrain::bsm_loss(bb, p, false)).epsilon(1e-13));
}

TEST_CASE("empty batches and malformed slots are rejected") {
    Rng rng(5);
    model::ModelParams p = model::ModelParams::init(small_mc(), 0.05, rng);
    CHECK_THROWS_AS(pretrain::mbp_loss(MbpBatch{}, p, false), ConfigError);
    CHECK_THROWS_AS(pretrain::bsm_loss(BsmBatch{}, p, false), ConfigError);
    MbpBatch bad = small_mbp_batch();
    bad.instances[0].slots[0].position = 7;  // beyond valid_len
    CHECK_THROWS_AS(pretrain::mbp_loss(bad, p, false), ContractViolation);
}

TEST_CASE("prepare_corpus: eligibility and strict temporal disjointness") {
    data::Corpus corpus = synth_corpus();
    TrainConfig cfg = small_tc();
    pretrain::PreparedCorpus pc = pretrain::prepare_corpus(corpus, cfg);
    REQUIRE(pc.windows.size() == corpus.logs.size());
    for (std::size_t u : pc.mbp_users) CHECK(corpus.logs[u].events.size() >= 2);
    REQUIRE(pc.bsm_users.size() == pc.bsm_pairs.size());
    for (const data::SequencePair& pair : pc.bsm_pairs) {
        REQUIRE(pair.seq_a.valid_len >= 1);
        REQUIRE(pair.seq_b.valid_len >= 1);
        const std::int64_t max_a = pair.seq_a.timestamps[pair.seq_a.valid_len - 1];
        CHECK(max_a <= pc.boundary);
        CHECK(pair.seq_b.timestamps[0] > pc.boundary);
    }
    for (const auto& [user, seq] : pc.pool_sequences)
        CHECK(seq.timestamps[0] > pc.boundary);
}

TEST_CASE("resolve_config fills the vocabulary and rejects disagreement") {
    data::Corpus corpus = synth_corpus();
    TrainConfig cfg = small_tc();
    cfg.vocab_size = 0;
    CHECK(pretrain::resolve_config(cfg, corpus).vocab_size == 20);
    cfg.vocab_size = 21;
    CHECK_THROWS_AS(pretrain::resolve_config(cfg, corpus), ConfigError);
    cfg.vocab_size = 0;
    CHECK_THROWS_AS(pretrain::resolve_config(cfg, data::Corpus{}), DataError);
}

TEST_CASE("steps=0 pre-training returns the untouched initialization") {
    data::Corpus corpus = synth_corpus();
    TrainConfig cfg = small_tc();
    cfg.steps = 0;
    pretrain::PretrainResult r = pretrain::run_pretraining(corpus, cfg);
    CHECK(r.log.empty());
    model::ModelConfig mc = small_mc();
    Rng init_rng = Rng::derive(cfg.seed, "init");
    model::ModelParams fresh = model::ModelParams::init(mc, cfg.init_scale, init_rng);
    CHECK(params_equal(r.params, fresh));
}

TEST_CASE("pre-training is bitwise deterministic across runs") {
    data::Corpus corpus = synth_corpus();
    TrainConfig cfg = small_tc();
    cfg.steps = 100;
    pretrain::PretrainResult a = pretrain::run_pretraining(corpus, cfg);
    pretrain::PretrainResult b = pretrain::run_pretraining(corpus, cfg);
    REQUIRE(a.log.size() == 100);
    REQUIRE(b.log.size() == 100);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].loss_total == b.log[i].loss_total);
        CHECK(a.log[i].loss_mbp == b.log[i].loss_mbp);
        CHECK(a.log[i].loss_bsm == b.log[i].loss_bsm);
        CHECK(a.log[i].pool_refreshed == b.log[i].pool_refreshed);
    }
    CHECK(params_equal(a.params, b.params));
    // pool refresh cadence: step 0 and every `interval` steps after
    for (std::size_t i = 0; i < a.log.size(); ++i)
        CHECK(a.log[i].pool_refreshed == (i % cfg.update_interval == 0));
}

TEST_CASE("single-task runs move only through their own loss") {
    data::Corpus corpus = synth_corpus();
    TrainConfig cfg = small_tc();
    cfg.steps = 30;
    cfg.tasks = "mbp";
    pretrain::PretrainResult m = pretrain::run_pretraining(corpus, cfg);
    for (const auto& rec : m.log) {
        CHECK(rec.loss_bsm == 0.0);
        CHECK(rec.loss_total == rec.loss_mbp);
    }
    cfg.tasks = "bsm";
    pretrain::PretrainResult s = pretrain::run_pretraining(corpus, cfg);
    for (const auto& rec : s.log) {
        CHECK(rec.loss_mbp == 0.0);
        CHECK(rec.loss_total == rec.loss_bsm);
    }
}

TEST_CASE("inspect_pool emits the advertised number of scored lines") {
    data::Corpus corpus = synth_corpus();
    TrainConfig cfg = small_tc();
    pretrain::PretrainResult r = pretrain::run_pretraining(corpus, cfg);
    auto lines = pretrain::inspect_pool(corpus, r.params, cfg, 3);
    // batch_size instances, one masked slot each at these lengths
    std::size_t mbp_lines = 0, bsm_lines = 0;
    for (const auto& ln : lines) {
        CHECK((ln.task == "mbp" || ln.task == "bsm"));
        CHECK(ln.step >= 1);
        CHECK(ln.step <= 3);
        CHECK(std::isfinite(ln.score));
        if (ln.task == "mbp") {
            ++mbp_lines;
            CHECK(ln.target != ln.negative);
        } else {
            ++bsm_lines;
            CHECK(ln.target != ln.negative);  // same-user candidates excluded
        }
    }
    CHECK(mbp_lines == 3 * cfg.batch_size * cfg.negatives_k);
    CHECK(bsm_lines == 3 * cfg.batch_size * cfg.negatives_p);
}
