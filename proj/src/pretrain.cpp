#include "pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ub::pretrain {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t argmax(const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] > t[best]) best = i;
    return best;
}

}  // namespace

double mbp_loss(const MbpBatch& batch, model::ModelParams& params, bool do_backward,
                double* accuracy) {
    if (batch.instances.empty()) throw ConfigError("mbp_loss: empty batch");
    num::Graph g;
    model::ParamNodes pn = model::ParamNodes::bind(g, params);
    std::vector<num::NodeRef> slot_losses;
    std::size_t hits = 0, total = 0;
    for (const MbpInstance& inst : batch.instances) {
        if (inst.slots.empty()) throw ConfigError("mbp_loss: instance without masked slots");
        num::NodeRef hidden =
            model::context_node(g, pn, params, model::behavior_embs_node(g, pn, params, inst.seq));
        for (const MbpSlot& slot : inst.slots) {
            if (slot.position >= inst.seq.valid_len)
                throw ContractViolation("mbp_loss: masked position beyond valid_len");
            if (slot.candidates.size() < 2 || slot.label >= slot.candidates.size())
                throw ContractViolation("mbp_loss: bad candidate list");
            std::vector<std::size_t> cand_rows;
            cand_rows.reserve(slot.candidates.size());
            for (int id : slot.candidates) {
                if (id < model::kFirstBehaviorId)
                    throw ContractViolation("mbp_loss: PAD/MASK candidate id");
                cand_rows.push_back(static_cast<std::size_t>(id));
            }
            num::NodeRef hvec = g.pick_row(hidden, slot.position);
            num::NodeRef cands = g.rows(pn.id_emb, std::move(cand_rows));
            num::NodeRef logits = g.matmul(cands, hvec);  // [K+1 x 1]
            slot_losses.push_back(g.cross_entropy_logits(logits, slot.label));
            if (argmax(g.value(logits)) == slot.label) ++hits;
            ++total;
        }
    }
    num::NodeRef loss = g.mean(slot_losses);
    if (do_backward) g.backward(loss);
    if (accuracy) *accuracy = static_cast<double>(hits) / static_cast<double>(total);
    return g.scalar_value(loss);
}

double bsm_loss(const BsmBatch& batch, model::ModelParams& params, bool do_backward,
                double* accuracy) {
    if (batch.pairs.empty()) throw ConfigError("bsm_loss: empty batch");
    num::Graph g;
    model::ParamNodes pn = model::ParamNodes::bind(g, params);
    std::vector<num::NodeRef> pair_losses;
    std::size_t hits = 0;
    for (const BsmPair& pair : batch.pairs) {
        if (pair.candidates.size() < 2 || pair.label >= pair.candidates.size())
            throw ContractViolation("bsm_loss: bad candidate list");
        num::NodeRef target = model::user_embedding_node(g, pn, params, pair.target);
        std::vector<num::NodeRef> scores;
        scores.reserve(pair.candidates.size());
        for (const model::BehaviorSequence& cand : pair.candidates)
            scores.push_back(g.dot(target, model::user_embedding_node(g, pn, params, cand)));
        num::NodeRef logits = g.concat_cols(scores);
        pair_losses.push_back(g.cross_entropy_logits(logits, pair.label));
        if (argmax(g.value(logits)) == pair.label) ++hits;
    }
    num::NodeRef loss = g.mean(pair_losses);
    if (do_backward) g.backward(loss);
    if (accuracy) *accuracy = static_cast<double>(hits) / static_cast<double>(batch.pairs.size());
    return g.scalar_value(loss);
}

JointLosses joint_step(const MbpBatch& mbp, const BsmBatch& bsm, model::ModelParams& params,
                       const TrainConfig& cfg) {
    JointLosses out;
    out.mbp = mbp_loss(mbp, params, true, &out.mbp_acc);
    out.bsm = bsm_loss(bsm, params, true, &out.bsm_acc);
    out.total = out.mbp + out.bsm;
    params.clear_pad_grad();
    num::adam_step(params.groups(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    return out;
}

TrainConfig resolve_config(TrainConfig cfg, const data::Corpus& corpus) {
    cfg.validate();
    if (cfg.vocab_size == 0) {
        if (corpus.vocab_size > 0) {
            cfg.vocab_size = corpus.vocab_size;
        } else {
            int max_id = 0;
            for (const data::BehaviorLog& log : corpus.logs)
                for (const data::BehaviorEvent& ev : log.events) max_id = std::max(max_id, ev.id);
            if (max_id < model::kFirstBehaviorId)
                throw DataError("resolve_config: corpus has no behaviors");
            cfg.vocab_size = static_cast<std::size_t>(max_id) - 1;
        }
    } else if (corpus.vocab_size > 0 && corpus.vocab_size != cfg.vocab_size) {
        throw ConfigError("vocab_size " + std::to_string(cfg.vocab_size) +
                          " disagrees with corpus vocabulary " +
                          std::to_string(corpus.vocab_size));
    }
    return cfg;
}

PreparedCorpus prepare_corpus(const data::Corpus& corpus, const TrainConfig& cfg) {
    if (corpus.logs.empty()) throw DataError("prepare_corpus: empty corpus");
    PreparedCorpus pc;
    pc.windows.resize(corpus.logs.size());
    for (std::size_t i = 0; i < corpus.logs.size(); ++i) {
        if (corpus.logs[i].events.empty()) continue;
        pc.windows[i] = data::window_from_events(corpus.logs[i].events, cfg.max_len);
        if (corpus.logs[i].events.size() >= 2) pc.mbp_users.push_back(i);
    }
    if (pc.mbp_users.empty()) throw DataError("prepare_corpus: no users with >= 2 events");
    pc.boundary = data::corpus_boundary(corpus, cfg.boundary_fraction);
    for (std::size_t i = 0; i < corpus.logs.size(); ++i) {
        auto pair = data::split_at_boundary(corpus.logs[i], pc.boundary, cfg.max_len);
        if (pair) {
            pc.bsm_users.push_back(i);
            pc.bsm_pairs.push_back(*pair);
            pc.pool_sequences.emplace_back(corpus.logs[i].user_id, pair->seq_b);
        } else {
            // users with only second-period events still feed the pool
            std::vector<data::BehaviorEvent> second;
            for (const data::BehaviorEvent& ev : corpus.logs[i].events)
                if (ev.ts > pc.boundary) second.push_back(ev);
            if (!second.empty())
                pc.pool_sequences.emplace_back(corpus.logs[i].user_id,
                                               data::window_from_events(second, cfg.max_len));
        }
    }
    return pc;
}

namespace {

struct StepBatches {
    MbpBatch mbp;
    BsmBatch bsm;
    // selection bookkeeping for inspect-pool
    std::vector<NegDumpLine> dump;
};

struct Streams {
    Rng data;    // user sampling + masking + positive placement
    Rng pool;    // behavior pool refresh
    Rng seqpool; // sequence pool refresh
    Rng select;  // random-mode selection
};

Streams make_streams(std::uint64_t seed) {
    return {Rng::derive(seed, "data"), Rng::derive(seed, "behavior-pool"),
            Rng::derive(seed, "sequence-pool"), Rng::derive(seed, "select")};
}

double behavior_cosine(const model::ModelParams& params, int a, int b) {
    return model::cosine_similarity(
        params.id_embedding.value.row(static_cast<std::size_t>(a)),
        params.id_embedding.value.row(static_cast<std::size_t>(b)), params.cfg.hidden_dim);
}

// Builds both task batches for one step; negatives selected from the pools.
StepBatches build_step_batches(long long step, const data::Corpus& corpus,
                               const PreparedCorpus& pc, model::ModelParams& params,
                               const sampling::BehaviorPool& bpool,
                               const sampling::SequencePool& spool,
                               model::ModelParams* snapshot, const TrainConfig& cfg,
                               sampling::Mode mode, Streams& streams, bool collect_dump) {
    StepBatches out;
    const bool do_mbp = cfg.tasks == "both" || cfg.tasks == "mbp";
    const bool do_bsm = cfg.tasks == "both" || cfg.tasks == "bsm";
    if (do_mbp) {
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t ui =
                pc.mbp_users[streams.data.uniform_below(pc.mbp_users.size())];
            data::MaskedInstance masked =
                data::mask_sequence(pc.windows[ui], streams.data, cfg.mask_rate);
            MbpInstance inst;
            inst.seq = masked.seq;
            for (std::size_t s = 0; s < masked.masked_positions.size(); ++s) {
                const int true_id = masked.masked_true_ids[s];
                std::vector<sampling::ScoredId> negs = sampling::select_behavior_negs(
                    true_id, bpool, params, cfg.negatives_k, streams.select);
                MbpSlot slot;
                slot.position = masked.masked_positions[s];
                slot.label = streams.data.uniform_below(negs.size() + 1);
                for (std::size_t i = 0, j = 0; i < negs.size() + 1; ++i) {
                    if (i == slot.label)
                        slot.candidates.push_back(true_id);
                    else
                        slot.candidates.push_back(negs[j++].id);
                }
                if (collect_dump)
                    for (const sampling::ScoredId& n : negs)
                        out.dump.push_back({step, "mbp", std::to_string(true_id),
                                            std::to_string(n.id),
                                            behavior_cosine(params, true_id, n.id)});
                inst.slots.push_back(std::move(slot));
            }
            out.mbp.instances.push_back(std::move(inst));
        }
    }
    if (do_bsm) {
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t k = streams.data.uniform_below(pc.bsm_users.size());
            const std::size_t ui = pc.bsm_users[k];
            const data::SequencePair& pair = pc.bsm_pairs[k];
            std::vector<sampling::ScoredSeq> negs = sampling::select_sequence_negs(
                pair.seq_a, corpus.logs[ui].user_id, spool, snapshot ? *snapshot : params,
                cfg.negatives_p, mode, streams.select);
            BsmPair bp;
            bp.user_id = corpus.logs[ui].user_id;
            bp.target = pair.seq_a;
            bp.label = streams.data.uniform_below(negs.size() + 1);
            for (std::size_t i = 0, j = 0; i < negs.size() + 1; ++i) {
                if (i == bp.label)
                    bp.candidates.push_back(pair.seq_b);
                else
                    bp.candidates.push_back(spool.entries[negs[j++].entry_index].seq);
            }
            if (collect_dump) {
                model::ModelParams& sp = snapshot ? *snapshot : params;
                const Tensor temb = model::encode_user(pair.seq_a, sp);
                for (const sampling::ScoredSeq& n : negs) {
                    const sampling::SeqPoolEntry& e = spool.entries[n.entry_index];
                    out.dump.push_back(
                        {step, "bsm", corpus.logs[ui].user_id, e.user_id,
                         model::cosine_similarity(temb.data(), e.cached_embedding.data(),
                                                  temb.size())});
                }
            }
            out.bsm.pairs.push_back(std::move(bp));
        }
    }
    return out;
}

}  // namespace

PretrainResult run_pretraining(const data::Corpus& corpus, const TrainConfig& raw_cfg) {
    const TrainConfig cfg = resolve_config(raw_cfg, corpus);
    const sampling::Mode mode = sampling::mode_from_string(cfg.sampling_mode);
    const bool do_mbp = cfg.tasks == "both" || cfg.tasks == "mbp";
    const bool do_bsm = cfg.tasks == "both" || cfg.tasks == "bsm";

    model::ModelConfig mc{cfg.hidden_dim, cfg.query_dim, cfg.heads,
                          cfg.max_len,    cfg.vocab_size, cfg.mean_pooling};
    Rng init_rng = Rng::derive(cfg.seed, "init");
    PretrainResult result{model::ModelParams::init(mc, cfg.init_scale, init_rng), {}, {}};
    model::ModelParams& params = result.params;

    const PreparedCorpus pc = prepare_corpus(corpus, cfg);
    if (do_bsm && pc.bsm_users.empty())
        throw DataError("run_pretraining: no users eligible for sequence matching");

    Streams streams = make_streams(cfg.seed);
    sampling::BehaviorPool bpool;
    sampling::SequencePool spool;
    model::ModelParams snapshot = params.clone();

    const auto run_start = Clock::now();
    for (long long step = 1; step <= static_cast<long long>(cfg.steps); ++step) {
        bool refreshed = false;
        double sampling_s = 0.0;
        {
            const auto t0 = Clock::now();
            if (do_bsm &&
                (spool.snapshot_step < 0 ||
                 (step - 1) % static_cast<long long>(cfg.update_interval) == 0)) {
                snapshot = params.clone();
                spool = sampling::refresh_sequence_pool(step, pc.pool_sequences, snapshot,
                                                        cfg.sequence_pool_u,
                                                        cfg.update_interval, streams.seqpool);
                refreshed = true;
            }
            if (do_mbp)
                bpool = sampling::refresh_behavior_pool(streams.pool, cfg.vocab_size,
                                                        cfg.behavior_pool_m, mode);
            sampling_s += seconds_since(t0);
        }
        const auto t1 = Clock::now();
        StepBatches batches = build_step_batches(step, corpus, pc, params, bpool, spool,
                                                 &snapshot, cfg, mode, streams, false);
        sampling_s += seconds_since(t1);

        StepRecord rec;
        rec.step = step;
        rec.pool_refreshed = refreshed;
        if (do_mbp && do_bsm) {
            JointLosses jl = joint_step(batches.mbp, batches.bsm, params, cfg);
            rec.loss_total = jl.total;
            rec.loss_mbp = jl.mbp;
            rec.loss_bsm = jl.bsm;
            rec.mbp_acc = jl.mbp_acc;
            rec.bsm_acc = jl.bsm_acc;
        } else if (do_mbp) {
            rec.loss_mbp = mbp_loss(batches.mbp, params, true, &rec.mbp_acc);
            rec.loss_total = rec.loss_mbp;
            params.clear_pad_grad();
            num::adam_step(params.groups(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        } else {
            rec.loss_bsm = bsm_loss(batches.bsm, params, true, &rec.bsm_acc);
            rec.loss_total = rec.loss_bsm;
            params.clear_pad_grad();
            num::adam_step(params.groups(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        }
        result.log.push_back(rec);
        result.timings.sampling_seconds += sampling_s;
        result.timings.steps += 1;
    }
    result.timings.total_seconds = seconds_since(run_start);
    return result;
}

std::vector<NegDumpLine> inspect_pool(const data::Corpus& corpus, model::ModelParams& params,
                                      const TrainConfig& raw_cfg, long long n_steps) {
    const TrainConfig cfg = resolve_config(raw_cfg, corpus);
    if (cfg.vocab_size != params.cfg.vocab_size)
        throw ConfigError("inspect_pool: corpus vocabulary disagrees with checkpoint");
    const sampling::Mode mode = sampling::mode_from_string(cfg.sampling_mode);
    const PreparedCorpus pc = prepare_corpus(corpus, cfg);
    Streams streams = make_streams(cfg.seed);
    sampling::BehaviorPool bpool;
    sampling::SequencePool spool;
    const bool do_bsm = cfg.tasks == "both" || cfg.tasks == "bsm";
    const bool do_mbp = cfg.tasks == "both" || cfg.tasks == "mbp";
    std::vector<NegDumpLine> dump;
    for (long long step = 1; step <= n_steps; ++step) {
        if (do_bsm &&
            (spool.snapshot_step < 0 ||
             (step - 1) % static_cast<long long>(cfg.update_interval) == 0))
            spool = sampling::refresh_sequence_pool(step, pc.pool_sequences, params,
                                                    cfg.sequence_pool_u, cfg.update_interval,
                                                    streams.seqpool);
        if (do_mbp)
            bpool = sampling::refresh_behavior_pool(streams.pool, cfg.vocab_size,
                                                    cfg.behavior_pool_m, mode);
        StepBatches batches = build_step_batches(step, corpus, pc, params, bpool, spool,
                                                 nullptr, cfg, mode, streams, true);
        dump.insert(dump.end(), batches.dump.begin(), batches.dump.end());
    }
    return dump;
}

}  // namespace ub::pretrain
