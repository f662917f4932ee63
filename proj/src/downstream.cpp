#include "downstream.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "graph.hpp"

namespace ub::downstream {

double auc(const std::vector<std::pair<double, int>>& scored) {
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& [s, l] : scored) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("auc: both classes required (" + std::to_string(n_pos) + " positive, " +
                        std::to_string(n_neg) + " negative)");
    std::vector<std::size_t> order(scored.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scored[a].first < scored[b].first;
    });
    // average ranks over tie groups (Mann-Whitney)
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scored[order[j]].first == scored[order[i]].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // (i+1 + j) / 2, 1-based
        for (std::size_t t = i; t < j; ++t)
            if (scored[order[t]].second) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

double dcg(const std::vector<int>& labels, std::size_t k) {
    double s = 0.0;
    const std::size_t n = std::min(k, labels.size());
    for (std::size_t i = 0; i < n; ++i)
        s += static_cast<double>(labels[i]) / std::log2(static_cast<double>(i) + 2.0);
    return s;
}

}  // namespace

double ndcg_at_k(const std::vector<std::vector<int>>& queries, std::size_t k,
                 std::size_t* skipped) {
    double total = 0.0;
    std::size_t used = 0, skip = 0;
    for (const std::vector<int>& labels : queries) {
        std::vector<int> ideal = labels;
        std::sort(ideal.begin(), ideal.end(), std::greater<int>());
        const double idcg = dcg(ideal, k);
        if (idcg <= 0.0) {
            ++skip;
            continue;
        }
        total += dcg(labels, k) / idcg;
        ++used;
    }
    if (skipped) *skipped = skip;
    if (used == 0) throw DataError("ndcg_at_k: no query with a relevant item");
    return total / static_cast<double>(used);
}

double average_precision(const std::vector<std::vector<int>>& queries, std::size_t* skipped) {
    double total = 0.0;
    std::size_t used = 0, skip = 0;
    for (const std::vector<int>& labels : queries) {
        std::size_t hits = 0;
        double s = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] > 0) {
                ++hits;
                s += static_cast<double>(hits) / static_cast<double>(i + 1);
            }
        }
        if (hits == 0) {
            ++skip;
            continue;
        }
        total += s / static_cast<double>(hits);
        ++used;
    }
    if (skipped) *skipped = skip;
    if (used == 0) throw DataError("average_precision: no query with a relevant item");
    return total / static_cast<double>(used);
}

namespace {

std::vector<std::size_t> sorted_user_order(const data::Corpus& corpus) {
    std::vector<std::size_t> order(corpus.logs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return corpus.logs[a].user_id < corpus.logs[b].user_id;
    });
    return order;
}

constexpr std::uint64_t kEvalLabelSeed = 424242;  // eval set is pipeline-independent

}  // namespace

std::vector<std::size_t> holdout_users(const data::Corpus& corpus, double holdout_fraction) {
    std::vector<std::size_t> order = sorted_user_order(corpus);
    const std::size_t h = std::max<std::size_t>(
        1, static_cast<std::size_t>(holdout_fraction * static_cast<double>(order.size())));
    if (h >= order.size()) throw ConfigError("holdout_users: holdout covers the whole corpus");
    return {order.end() - static_cast<std::ptrdiff_t>(h), order.end()};
}

std::vector<std::size_t> candidate_label_users(const data::Corpus& corpus,
                                               double holdout_fraction) {
    std::vector<std::size_t> order = sorted_user_order(corpus);
    const std::size_t h = std::max<std::size_t>(
        1, static_cast<std::size_t>(holdout_fraction * static_cast<double>(order.size())));
    if (h >= order.size())
        throw ConfigError("candidate_label_users: holdout covers the whole corpus");
    order.resize(order.size() - h);
    return order;
}

model::ModelParams finetune(model::ModelParams start, const data::Corpus& corpus,
                            const data::TruthTable& truth, const FinetuneConfig& cfg,
                            std::size_t max_len) {
    cfg.validate();
    model::ModelParams params = std::move(start);

    std::vector<std::size_t> pool = candidate_label_users(corpus, cfg.holdout_fraction);
    const std::size_t n_label = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.label_fraction * static_cast<double>(pool.size())));
    Rng user_rng = Rng::derive(cfg.seed, "label-users");
    std::vector<std::size_t> picks = user_rng.sample_without_replacement(pool.size(), n_label);
    std::unordered_set<std::size_t> labeled;
    for (std::size_t p : picks) labeled.insert(pool[p]);

    Rng label_rng = Rng::derive(cfg.seed, "labels");
    std::vector<data::LabeledExample> all =
        data::make_downstream_labels(corpus, truth, label_rng, cfg.pairs_per_user);
    std::vector<data::LabeledExample> examples;
    for (const data::LabeledExample& ex : all)
        if (labeled.count(ex.user_index)) examples.push_back(ex);
    if (examples.empty()) throw ConfigError("finetune: empty labeled set");

    std::unordered_map<std::size_t, model::BehaviorSequence> windows;
    for (const data::LabeledExample& ex : examples)
        if (!windows.count(ex.user_index))
            windows.emplace(ex.user_index,
                            data::window_from_events(corpus.logs[ex.user_index].events, max_len));

    std::vector<num::ParamGroup*> trainable;
    if (cfg.freeze_encoder) {
        trainable = {&params.id_embedding};
    } else {
        trainable = params.groups();
    }

    Rng shuffle_rng = Rng::derive(cfg.seed, "shuffle");
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = examples.size();  // forces a shuffle before the first batch

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        num::Graph g;
        model::ParamNodes pn = model::ParamNodes::bind(g, params);
        std::vector<num::NodeRef> losses;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = 0; i < order.size(); ++i) {
                    std::size_t j = i + static_cast<std::size_t>(
                                            shuffle_rng.uniform_below(order.size() - i));
                    std::swap(order[i], order[j]);
                }
                cursor = 0;
            }
            const data::LabeledExample& ex = examples[order[cursor++]];
            num::NodeRef user =
                model::user_embedding_node(g, pn, params, windows.at(ex.user_index));
            num::NodeRef cand = g.pick_row(
                g.rows(pn.id_emb, {static_cast<std::size_t>(ex.candidate_id)}), 0);
            losses.push_back(g.bce_logits(g.dot(user, cand), static_cast<double>(ex.label)));
        }
        g.backward(g.mean(losses));
        params.clear_pad_grad();
        if (cfg.freeze_encoder) {
            // grads of frozen groups are discarded
            for (num::ParamGroup* pg : params.groups())
                if (pg != &params.id_embedding) pg->zero_grad();
        }
        num::adam_step(trainable, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    }
    return params;
}

EvalReport evaluate(model::ModelParams& params, const data::Corpus& corpus,
                    const data::TruthTable& truth, const FinetuneConfig& cfg,
                    std::size_t max_len) {
    std::vector<std::size_t> held = holdout_users(corpus, cfg.holdout_fraction);
    std::unordered_set<std::size_t> held_set(held.begin(), held.end());

    Rng label_rng = Rng::derive(kEvalLabelSeed, "eval-labels");
    std::vector<data::LabeledExample> all =
        data::make_downstream_labels(corpus, truth, label_rng, cfg.pairs_per_user);

    std::vector<std::pair<double, int>> pooled;
    std::unordered_map<std::size_t, std::vector<std::pair<double, int>>> scored_by_user;
    std::unordered_map<std::size_t, Tensor> user_embs;
    for (const data::LabeledExample& ex : all) {
        if (!held_set.count(ex.user_index)) continue;
        auto it = user_embs.find(ex.user_index);
        if (it == user_embs.end()) {
            model::BehaviorSequence w =
                data::window_from_events(corpus.logs[ex.user_index].events, max_len);
            it = user_embs.emplace(ex.user_index, model::encode_user(w, params)).first;
        }
        const double s = model::match(it->second, model::encode_behavior_id(ex.candidate_id, params));
        scored_by_user[ex.user_index].emplace_back(s, ex.label);
        pooled.emplace_back(s, ex.label);
    }
    if (pooled.empty()) throw DataError("evaluate: no held-out examples");

    std::vector<std::vector<int>> queries;
    std::vector<std::size_t> sorted_users;
    for (const auto& [ui, v] : scored_by_user) sorted_users.push_back(ui);
    std::sort(sorted_users.begin(), sorted_users.end());
    for (std::size_t ui : sorted_users) {
        std::vector<std::pair<double, int>> v = scored_by_user[ui];
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
            return a.first > b.first;
        });
        std::vector<int> labels;
        labels.reserve(v.size());
        for (const auto& [s, l] : v) labels.push_back(l);
        queries.push_back(std::move(labels));
    }

    EvalReport report;
    report.auc = auc(pooled);
    report.ndcg_at_10 = ndcg_at_k(queries, 10, &report.n_skipped_queries);
    report.ap = average_precision(queries);
    report.n_examples = pooled.size();
    report.n_queries = queries.size();
    return report;
}

}  // namespace ub::downstream
