#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace ub::sampling {

enum class Mode { Random, MediumHard, GlobalHardest };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

// Size-m candidate pool for MBP negatives, re-sampled every training step.
// In GlobalHardest mode the pool is the whole vocabulary.
struct BehaviorPool {
    std::vector<int> candidate_ids;
    Mode mode = Mode::MediumHard;
};

BehaviorPool refresh_behavior_pool(Rng& rng, std::size_t vocab_size, std::size_t m, Mode mode);

struct ScoredId {
    int id = 0;
    double score = 0.0;
};

// Top-K pool candidates by cosine similarity to the target's position-free
// embedding (ties by smaller ID); candidates equal to the target are dropped.
// Random mode draws K distinct IDs from the vocabulary instead.
std::vector<ScoredId> select_behavior_negs(int target_id, const BehaviorPool& pool,
                                           const model::ModelParams& params, std::size_t K,
                                           Rng& rng);

struct SeqPoolEntry {
    std::string user_id;
    model::BehaviorSequence seq;
    Tensor cached_embedding;  // computed with the snapshot params
};

// Asynchronously refreshed candidate sequence pool; entries and caches are
// immutable between refreshes.
struct SequencePool {
    std::vector<SeqPoolEntry> entries;
    long long snapshot_step = -1;
    std::size_t interval = 50;
};

// u sequences drawn without replacement from the eligible (second-period)
// sequences; embeddings cached with params_snapshot.
SequencePool refresh_sequence_pool(
    long long step, const std::vector<std::pair<std::string, model::BehaviorSequence>>& eligible,
    model::ModelParams& params_snapshot, std::size_t u, std::size_t interval, Rng& rng);

struct ScoredSeq {
    std::size_t entry_index = 0;
    double score = 0.0;
};

// Top-P pool entries by cosine similarity between cached embeddings and the
// target encoded with the same snapshot; same-user entries are excluded
// (ties by smaller user id). Random mode draws P eligible entries uniformly.
std::vector<ScoredSeq> select_sequence_negs(const model::BehaviorSequence& target,
                                            const std::string& target_user,
                                            const SequencePool& pool,
                                            model::ModelParams& params_snapshot, std::size_t P,
                                            Mode mode, Rng& rng);

}  // namespace ub::sampling
