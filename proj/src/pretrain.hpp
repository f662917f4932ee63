#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "sampling.hpp"

namespace ub::pretrain {

// One masked slot: K+1 candidate IDs with the positive at `label`
// (position randomized within the list).
struct MbpSlot {
    std::size_t position = 0;
    std::vector<int> candidates;
    std::size_t label = 0;
};

struct MbpInstance {
    model::BehaviorSequence seq;  // MASK tokens already substituted
    std::vector<MbpSlot> slots;
};

struct MbpBatch {
    std::vector<MbpInstance> instances;
};

struct BsmPair {
    std::string user_id;
    model::BehaviorSequence target;                    // sequence A
    std::vector<model::BehaviorSequence> candidates;   // P+1, time-disjoint from A
    std::size_t label = 0;
};

struct BsmBatch {
    std::vector<BsmPair> pairs;
};

// Mean cross-entropy over masked slots; optional reverse pass (accumulates
// into param grads). `accuracy` receives the fraction of slots whose positive
// logit is the maximum.
double mbp_loss(const MbpBatch& batch, model::ModelParams& params, bool do_backward,
                double* accuracy = nullptr);

// Mean cross-entropy over pairs; target and all candidates are encoded with
// the current parameters.
double bsm_loss(const BsmBatch& batch, model::ModelParams& params, bool do_backward,
                double* accuracy = nullptr);

struct JointLosses {
    double total = 0.0, mbp = 0.0, bsm = 0.0;
    double mbp_acc = 0.0, bsm_acc = 0.0;
};

// Backward on both losses, then one Adam update (PAD row grad cleared first).
JointLosses joint_step(const MbpBatch& mbp, const BsmBatch& bsm, model::ModelParams& params,
                       const TrainConfig& cfg);

// Corpus views precomputed once per run.
struct PreparedCorpus {
    std::vector<model::BehaviorSequence> windows;  // parallel to corpus.logs
    std::vector<std::size_t> mbp_users;            // >= 2 events
    std::int64_t boundary = 0;
    std::vector<std::size_t> bsm_users;                // both periods nonempty
    std::vector<data::SequencePair> bsm_pairs;         // parallel to bsm_users
    std::vector<std::pair<std::string, model::BehaviorSequence>> pool_sequences;
};

PreparedCorpus prepare_corpus(const data::Corpus& corpus, const TrainConfig& cfg);

struct StepRecord {
    long long step = 0;
    double loss_total = 0.0, loss_mbp = 0.0, loss_bsm = 0.0;
    double mbp_acc = 0.0, bsm_acc = 0.0;
    bool pool_refreshed = false;
};

struct PretrainTimings {
    double total_seconds = 0.0;
    double sampling_seconds = 0.0;  // pool refreshes + negative selection
    long long steps = 0;
};

struct PretrainResult {
    model::ModelParams params;
    std::vector<StepRecord> log;
    PretrainTimings timings;
};

// Resolves vocab_size from the corpus when the config leaves it 0.
TrainConfig resolve_config(TrainConfig cfg, const data::Corpus& corpus);

PretrainResult run_pretraining(const data::Corpus& corpus, const TrainConfig& cfg);

struct NegDumpLine {
    long long step = 0;
    std::string task;      // "mbp" | "bsm"
    std::string target;    // behavior id or user id
    std::string negative;  // behavior id or user id
    double score = 0.0;    // cosine similarity (filled in for every mode)
};

// Runs n_steps of batch construction and negative selection with no updates.
std::vector<NegDumpLine> inspect_pool(const data::Corpus& corpus, model::ModelParams& params,
                                      const TrainConfig& cfg, long long n_steps);

}  // namespace ub::pretrain
