#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "model.hpp"
#include "rng.hpp"

namespace ub::data {

struct BehaviorEvent {
    std::int64_t ts = 0;
    int id = 0;
};

// Time-ordered behavior events of one user.
struct BehaviorLog {
    std::string user_id;
    std::vector<BehaviorEvent> events;
};

struct Corpus {
    std::vector<BehaviorLog> logs;
    std::size_t vocab_size = 0;  // behavior IDs are 2 .. vocab_size+1
};

inline constexpr const char* kLogFormatVersion = "userbert-log v1";
inline constexpr const char* kTruthFormatVersion = "userbert-truth v1";

// Log file: version line, then `user_id<TAB>timestamp<TAB>behavior_id` in any
// order; `#` starts a comment. Logs come back sorted by user id, events by
// timestamp, truncated to the most recent max_behaviors.
Corpus load_logs(const std::string& path, std::size_t max_behaviors = 100);
void save_logs(const Corpus& corpus, const std::string& path);

// Most recent max_len events as a model input window.
model::BehaviorSequence window_from_events(const std::vector<BehaviorEvent>& events,
                                           std::size_t max_len);

struct MaskedInstance {
    model::BehaviorSequence seq;  // MASK tokens substituted
    std::vector<std::size_t> masked_positions;
    std::vector<int> masked_true_ids;
};

// Masks max(1, floor(mask_rate * valid_len)) distinct valid positions.
MaskedInstance mask_sequence(const model::BehaviorSequence& seq, Rng& rng,
                             double mask_rate = 0.1);

struct SequencePair {
    model::BehaviorSequence seq_a;
    model::BehaviorSequence seq_b;
    bool same_user = true;
};

// Splits at the user's timestamp quantile; boundary ties go to seq_a so
// max(t_A) < min(t_B) strictly. Throws SplitInfeasible when all timestamps
// are equal.
SequencePair split_time_disjoint(const BehaviorLog& log, double boundary_fraction,
                                 std::size_t max_len);

// Corpus-wide boundary timestamp at the given quantile (same tie rule).
std::int64_t corpus_boundary(const Corpus& corpus, double fraction);

// Per-user split at a fixed boundary; nullopt when either side is empty.
std::optional<SequencePair> split_at_boundary(const BehaviorLog& log, std::int64_t t_star,
                                              std::size_t max_len);

struct SynthConfig {
    std::size_t n_users = 2000;
    std::size_t vocab_size = 1000;
    std::size_t n_topics = 8;
    std::size_t interests_per_user = 2;
    std::size_t events_per_user = 60;
    double behavior_noise = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t slice_size() const { return vocab_size / n_topics; }
};

struct TruthTable {
    std::size_t n_topics = 0;
    std::size_t vocab_size = 0;
    std::map<std::string, std::vector<int>> topics;  // user -> sorted topic ids
};

// Latent-interest generator: each user draws a fixed topic set; each event
// draws a behavior from one of its topics, or uniformly from the whole
// vocabulary with probability behavior_noise. Timestamps are 1..events_per_user.
Corpus generate_synthetic(const SynthConfig& cfg, TruthTable* truth);

void save_truth(const TruthTable& truth, const std::string& path);
TruthTable load_truth(const std::string& path);

// Topic t covers ids [2 + t*slice, 2 + (t+1)*slice).
int topic_of_id(int behavior_id, std::size_t vocab_size, std::size_t n_topics);

struct LabeledExample {
    std::size_t user_index = 0;  // into corpus.logs
    int candidate_id = 0;
    int label = 0;
};

// Balanced click labels: positives from the user's topic slices outside the
// observed window, negatives from non-topic vocabulary.
std::vector<LabeledExample> make_downstream_labels(const Corpus& corpus,
                                                   const TruthTable& truth, Rng& rng,
                                                   std::size_t pairs_per_user);

}  // namespace ub::data
