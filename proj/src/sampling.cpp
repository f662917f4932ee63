#include "sampling.hpp"

#include <algorithm>

namespace ub::sampling {

Mode mode_from_string(const std::string& s) {
    if (s == "random") return Mode::Random;
    if (s == "medium_hard") return Mode::MediumHard;
    if (s == "global_hardest") return Mode::GlobalHardest;
    throw ConfigError("unknown sampling mode '" + s + "'");
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::Random: return "random";
        case Mode::MediumHard: return "medium_hard";
        case Mode::GlobalHardest: return "global_hardest";
    }
    return "?";
}

BehaviorPool refresh_behavior_pool(Rng& rng, std::size_t vocab_size, std::size_t m, Mode mode) {
    if (vocab_size < 2) throw ConfigError("refresh_behavior_pool: vocabulary too small");
    BehaviorPool pool;
    pool.mode = mode;
    if (mode == Mode::GlobalHardest) {
        pool.candidate_ids.resize(vocab_size);
        for (std::size_t i = 0; i < vocab_size; ++i)
            pool.candidate_ids[i] = 2 + static_cast<int>(i);
        return pool;
    }
    if (m < 2) throw ConfigError("refresh_behavior_pool: m must be >= 2");
    if (m > vocab_size)
        throw ConfigError("refresh_behavior_pool: m " + std::to_string(m) +
                          " exceeds vocabulary " + std::to_string(vocab_size));
    pool.candidate_ids.resize(m);
    // with replacement; duplicates are collapsed at selection time
    for (std::size_t i = 0; i < m; ++i)
        pool.candidate_ids[i] = 2 + static_cast<int>(rng.uniform_below(vocab_size));
    return pool;
}

std::vector<ScoredId> select_behavior_negs(int target_id, const BehaviorPool& pool,
                                           const model::ModelParams& params, std::size_t K,
                                           Rng& rng) {
    const std::size_t vocab = params.cfg.vocab_size;
    if (target_id < model::kFirstBehaviorId ||
        static_cast<std::size_t>(target_id) >= vocab + 2)
        throw ContractViolation("select_behavior_negs: bad target id " +
                                std::to_string(target_id));
    std::vector<ScoredId> out;
    out.reserve(K);
    if (pool.mode == Mode::Random) {
        if (K > vocab - 1)
            throw PoolExhausted("select_behavior_negs: K exceeds vocabulary minus target");
        std::vector<std::size_t> picks = rng.sample_without_replacement(vocab - 1, K);
        for (std::size_t p : picks) {
            int id = 2 + static_cast<int>(p);
            if (id >= target_id) ++id;  // skip the target slot
            out.push_back({id, 0.0});
        }
        return out;
    }
    std::vector<int> ids = pool.candidate_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    ids.erase(std::remove(ids.begin(), ids.end(), target_id), ids.end());
    if (ids.size() < K)
        throw PoolExhausted("select_behavior_negs: " + std::to_string(ids.size()) +
                            " distinct non-target candidates < K=" + std::to_string(K));
    const std::size_t d = params.cfg.hidden_dim;
    const double* target_row = params.id_embedding.value.row(static_cast<std::size_t>(target_id));
    std::vector<ScoredId> scored;
    scored.reserve(ids.size());
    for (int id : ids) {
        const double* row = params.id_embedding.value.row(static_cast<std::size_t>(id));
        scored.push_back({id, model::cosine_similarity(target_row, row, d)});
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(K),
                      scored.end(), [](const ScoredId& a, const ScoredId& b) {
                          if (a.score != b.score) return a.score > b.score;
                          return a.id < b.id;
                      });
    scored.resize(K);
    return scored;
}

SequencePool refresh_sequence_pool(
    long long step, const std::vector<std::pair<std::string, model::BehaviorSequence>>& eligible,
    model::ModelParams& params_snapshot, std::size_t u, std::size_t interval, Rng& rng) {
    if (eligible.size() < u)
        throw ConfigError("refresh_sequence_pool: " + std::to_string(eligible.size()) +
                          " eligible sequences < pool size " + std::to_string(u));
    SequencePool pool;
    pool.snapshot_step = step;
    pool.interval = interval;
    std::vector<std::size_t> picks = rng.sample_without_replacement(eligible.size(), u);
    std::sort(picks.begin(), picks.end());
    pool.entries.reserve(u);
    for (std::size_t p : picks) {
        SeqPoolEntry entry;
        entry.user_id = eligible[p].first;
        entry.seq = eligible[p].second;
        entry.cached_embedding = model::encode_user(entry.seq, params_snapshot);
        pool.entries.push_back(std::move(entry));
    }
    return pool;
}

std::vector<ScoredSeq> select_sequence_negs(const model::BehaviorSequence& target,
                                            const std::string& target_user,
                                            const SequencePool& pool,
                                            model::ModelParams& params_snapshot, std::size_t P,
                                            Mode mode, Rng& rng) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.entries.size(); ++i)
        if (pool.entries[i].user_id != target_user) candidates.push_back(i);
    if (candidates.size() < P)
        throw PoolExhausted("select_sequence_negs: " + std::to_string(candidates.size()) +
                            " other-user entries < P=" + std::to_string(P));
    std::vector<ScoredSeq> out;
    out.reserve(P);
    if (mode == Mode::Random) {
        for (std::size_t p : rng.sample_without_replacement(candidates.size(), P))
            out.push_back({candidates[p], 0.0});
        return out;
    }
    // target embedded with the same snapshot the caches were computed with
    const Tensor target_emb = model::encode_user(target, params_snapshot);
    std::vector<ScoredSeq> scored;
    scored.reserve(candidates.size());
    for (std::size_t i : candidates) {
        const Tensor& cached = pool.entries[i].cached_embedding;
        scored.push_back({i, model::cosine_similarity(target_emb.data(), cached.data(),
                                                      target_emb.size())});
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(P),
                      scored.end(), [&](const ScoredSeq& a, const ScoredSeq& b) {
                          if (a.score != b.score) return a.score > b.score;
                          return pool.entries[a.entry_index].user_id <
                                 pool.entries[b.entry_index].user_id;
                      });
    scored.resize(P);
    return scored;
}

}  // namespace ub::sampling
