#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "data.hpp"

namespace ub::downstream {

// Mann-Whitney AUC: probability a random positive outscores a random
// negative, ties counted 0.5. Throws on single-class input.
double auc(const std::vector<std::pair<double, int>>& scored);

// Mean nDCG@k over queries (binary gains, discount 1/log2(rank+1)); queries
// without a relevant item are skipped and counted in *skipped.
double ndcg_at_k(const std::vector<std::vector<int>>& ranked_labels_per_query, std::size_t k,
                 std::size_t* skipped = nullptr);

// Mean average precision over queries; same skip rule.
double average_precision(const std::vector<std::vector<int>>& ranked_labels_per_query,
                         std::size_t* skipped = nullptr);

struct EvalReport {
    double auc = 0.0;
    double ndcg_at_10 = 0.0;
    double ap = 0.0;
    std::size_t n_examples = 0;
    std::size_t n_queries = 0;
    std::size_t n_skipped_queries = 0;
};

// Deterministic split: the last floor(holdout_fraction * n) users (sorted by
// id) are held out for evaluation; labels are drawn from the rest.
std::vector<std::size_t> holdout_users(const data::Corpus& corpus, double holdout_fraction);
std::vector<std::size_t> candidate_label_users(const data::Corpus& corpus,
                                               double holdout_fraction);

// Supervised training of score(user, candidate) = user_emb . id_emb[candidate]
// with sigmoid binary cross-entropy. Labels come from the non-held-out users.
model::ModelParams finetune(model::ModelParams start, const data::Corpus& corpus,
                            const data::TruthTable& truth, const FinetuneConfig& cfg,
                            std::size_t max_len);

// Ranking metrics on held-out users only.
EvalReport evaluate(model::ModelParams& params, const data::Corpus& corpus,
                    const data::TruthTable& truth, const FinetuneConfig& cfg,
                    std::size_t max_len);

}  // namespace ub::downstream
