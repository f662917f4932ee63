#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace ub::model {

inline constexpr int kPadId = 0;
inline constexpr int kMaskId = 1;
inline constexpr int kFirstBehaviorId = 2;

// Fixed-length padded window of behavior IDs. ids[k] == kPadId exactly for
// k >= valid_len; timestamps non-decreasing over valid positions.
struct BehaviorSequence {
    std::vector<int> ids;
    std::vector<std::int64_t> timestamps;
    std::size_t valid_len = 0;

    std::size_t max_len() const { return ids.size(); }
    void validate() const;
};

struct ModelConfig {
    std::size_t hidden_dim = 32;
    std::size_t query_dim = 32;
    std::size_t heads = 2;
    std::size_t max_len = 48;
    std::size_t vocab_size = 0;  // number of behavior IDs (IDs are 2..vocab_size+1)
    bool mean_pooling = false;

    std::size_t table_rows() const { return vocab_size + 2; }
    void validate() const;
};

// All learnable arrays of the hierarchical user model. Row 0 of the ID table
// is PAD (kept all-zero, excluded from optimization), row 1 is the learned
// MASK embedding.
struct ModelParams {
    ModelConfig cfg;
    num::ParamGroup id_embedding;   // [vocab+2 x d]
    num::ParamGroup pos_embedding;  // [max_len x d]
    num::ParamGroup attn_q;         // [d x d]
    num::ParamGroup attn_k;         // [d x d]
    num::ParamGroup attn_v;         // [d x d]
    num::ParamGroup attn_out;       // [d x d]
    num::ParamGroup pool_proj;      // [d x q]
    num::ParamGroup pool_query;     // [1 x q]

    static ModelParams init(const ModelConfig& cfg, double init_scale, Rng& rng);

    std::vector<num::ParamGroup*> groups();
    std::vector<const num::ParamGroup*> groups() const;

    // Deep copy used as the sequence-pool snapshot.
    ModelParams clone() const { return *this; }

    void zero_grads();
    // PAD row stays out of optimization.
    void clear_pad_grad();
};

// Param leaves bound once per graph and reused across sequences.
struct ParamNodes {
    num::NodeRef id_emb, pos_emb, q, k, v, out, pool_proj, pool_query;
    static ParamNodes bind(num::Graph& g, ModelParams& p);
};

// Graph builders over the valid prefix only (padding handled at the module
// boundary). hidden_node returns [valid_len x d], user_embedding_node [d].
num::NodeRef behavior_embs_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                                const BehaviorSequence& seq);
num::NodeRef context_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                          num::NodeRef embs);
num::NodeRef aggregate_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                            num::NodeRef hidden);
num::NodeRef user_embedding_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                                 const BehaviorSequence& seq);

// Forward-only evaluation surface.
Tensor encode_behaviors(const BehaviorSequence& seq, ModelParams& p);  // [max_len x d]
Tensor encode_behavior_id(int behavior_id, const ModelParams& p);      // [d]
Tensor context_encode(const Tensor& behavior_embs, std::size_t valid_len,
                      ModelParams& p);                                 // [max_len x d]
Tensor aggregate(const Tensor& hidden, std::size_t valid_len, ModelParams& p);  // [d]
Tensor encode_user(const BehaviorSequence& seq, ModelParams& p);                // [d]
double match(const Tensor& a, const Tensor& b);

double cosine_similarity(const double* a, const double* b, std::size_t n);

}  // namespace ub::model
