#include "model.hpp"

#include <algorithm>
#include <cmath>

namespace ub::model {

void BehaviorSequence::validate() const {
    if (ids.size() != timestamps.size())
        throw ShapeError("BehaviorSequence: ids/timestamps length mismatch");
    if (valid_len == 0 || valid_len > ids.size())
        throw ContractViolation("BehaviorSequence: valid_len " + std::to_string(valid_len) +
                                " out of [1, " + std::to_string(ids.size()) + "]");
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (k >= valid_len && ids[k] != kPadId)
            throw ContractViolation("BehaviorSequence: non-PAD id at padded position " +
                                    std::to_string(k));
        if (k < valid_len && ids[k] == kPadId)
            throw ContractViolation("BehaviorSequence: PAD id at valid position " +
                                    std::to_string(k));
    }
    for (std::size_t k = 1; k < valid_len; ++k)
        if (timestamps[k] < timestamps[k - 1])
            throw ContractViolation("BehaviorSequence: timestamps decrease at position " +
                                    std::to_string(k));
}

void ModelConfig::validate() const {
    if (hidden_dim == 0 || query_dim == 0 || heads == 0 || max_len == 0 || vocab_size == 0)
        throw ConfigError("ModelConfig: all dimensions must be positive");
    if (hidden_dim % heads != 0)
        throw ConfigError("ModelConfig: heads must divide hidden_dim");
}

namespace {
void fill_uniform(Tensor& t, double scale, Rng& rng) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
}
}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, double init_scale, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.hidden_dim, q = cfg.query_dim;
    ModelParams p{cfg,
                  {"id_embedding", Tensor::matrix(cfg.table_rows(), d)},
                  {"pos_embedding", Tensor::matrix(cfg.max_len, d)},
                  {"attn_q", Tensor::matrix(d, d)},
                  {"attn_k", Tensor::matrix(d, d)},
                  {"attn_v", Tensor::matrix(d, d)},
                  {"attn_out", Tensor::matrix(d, d)},
                  {"pool_proj", Tensor::matrix(d, q)},
                  {"pool_query", Tensor::matrix(1, q)}};
    for (num::ParamGroup* g : p.groups()) fill_uniform(g->value, init_scale, rng);
    // PAD row all-zero
    std::fill(p.id_embedding.value.row(kPadId), p.id_embedding.value.row(kPadId) + d, 0.0);
    return p;
}

std::vector<num::ParamGroup*> ModelParams::groups() {
    return {&id_embedding, &pos_embedding, &attn_q, &attn_k,
            &attn_v,       &attn_out,      &pool_proj, &pool_query};
}

std::vector<const num::ParamGroup*> ModelParams::groups() const {
    return {&id_embedding, &pos_embedding, &attn_q, &attn_k,
            &attn_v,       &attn_out,      &pool_proj, &pool_query};
}

void ModelParams::zero_grads() {
    for (num::ParamGroup* g : groups()) g->zero_grad();
}

void ModelParams::clear_pad_grad() {
    std::fill(id_embedding.grad.row(kPadId),
              id_embedding.grad.row(kPadId) + cfg.hidden_dim, 0.0);
}

ParamNodes ParamNodes::bind(num::Graph& g, ModelParams& p) {
    return {g.param(p.id_embedding), g.param(p.pos_embedding), g.param(p.attn_q),
            g.param(p.attn_k),       g.param(p.attn_v),        g.param(p.attn_out),
            g.param(p.pool_proj),    g.param(p.pool_query)};
}

num::NodeRef behavior_embs_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                                const BehaviorSequence& seq) {
    seq.validate();
    if (seq.max_len() > p.cfg.max_len)
        throw ShapeError("behavior_embs: sequence length " + std::to_string(seq.max_len()) +
                         " exceeds model max_len " + std::to_string(p.cfg.max_len));
    std::vector<std::size_t> ids(seq.valid_len);
    std::vector<std::size_t> pos(seq.valid_len);
    for (std::size_t k = 0; k < seq.valid_len; ++k) {
        const int id = seq.ids[k];
        if (id < 0 || static_cast<std::size_t>(id) >= p.cfg.table_rows())
            throw DataError("behavior id " + std::to_string(id) + " out of vocabulary at position " +
                            std::to_string(k));
        ids[k] = static_cast<std::size_t>(id);
        pos[k] = k;
    }
    return g.add(g.rows(pn.id_emb, std::move(ids)), g.rows(pn.pos_emb, std::move(pos)));
}

num::NodeRef context_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                          num::NodeRef embs) {
    const std::size_t d = p.cfg.hidden_dim;
    const std::size_t h = p.cfg.heads;
    const std::size_t dh = d / h;
    num::NodeRef q = g.matmul(embs, pn.q);
    num::NodeRef k = g.matmul(embs, pn.k);
    num::NodeRef v = g.matmul(embs, pn.v);
    std::vector<num::NodeRef> heads;
    heads.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
        num::NodeRef qh = g.slice_cols(q, i * dh, (i + 1) * dh);
        num::NodeRef kh = g.slice_cols(k, i * dh, (i + 1) * dh);
        num::NodeRef vh = g.slice_cols(v, i * dh, (i + 1) * dh);
        num::NodeRef scores = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
        heads.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    num::NodeRef merged = h == 1 ? heads[0] : g.concat_cols(heads);
    // residual keeps positional identity at masked slots
    return g.add(g.matmul(merged, pn.out), embs);
}

num::NodeRef aggregate_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                            num::NodeRef hidden) {
    const std::size_t rows = g.value(hidden).rows();
    num::NodeRef alpha;
    if (p.cfg.mean_pooling) {
        alpha = g.constant(Tensor::matrix(1, rows, 1.0 / static_cast<double>(rows)));
    } else {
        num::NodeRef scores = g.matmul_nt(pn.pool_query,
                                          g.tanh_activate(g.matmul(hidden, pn.pool_proj)));
        alpha = g.softmax_rows(scores);  // [1 x L]
    }
    return g.pick_row(g.matmul(alpha, hidden), 0);  // [d]
}

num::NodeRef user_embedding_node(num::Graph& g, const ParamNodes& pn, const ModelParams& p,
                                 const BehaviorSequence& seq) {
    return aggregate_node(g, pn, p, context_node(g, pn, p, behavior_embs_node(g, pn, p, seq)));
}

Tensor encode_behaviors(const BehaviorSequence& seq, ModelParams& p) {
    num::Graph g;
    ParamNodes pn = ParamNodes::bind(g, p);
    const Tensor& compact = g.value(behavior_embs_node(g, pn, p, seq));
    Tensor out = Tensor::matrix(seq.max_len(), p.cfg.hidden_dim);
    for (std::size_t k = 0; k < seq.valid_len; ++k)
        std::copy(compact.row(k), compact.row(k) + p.cfg.hidden_dim, out.row(k));
    return out;
}

Tensor encode_behavior_id(int behavior_id, const ModelParams& p) {
    if (behavior_id < kFirstBehaviorId)
        throw ContractViolation("encode_behavior_id: PAD/MASK id " +
                                std::to_string(behavior_id));
    if (static_cast<std::size_t>(behavior_id) >= p.cfg.table_rows())
        throw DataError("encode_behavior_id: id " + std::to_string(behavior_id) +
                        " out of vocabulary");
    Tensor out = Tensor::vector(p.cfg.hidden_dim);
    const double* row = p.id_embedding.value.row(static_cast<std::size_t>(behavior_id));
    std::copy(row, row + p.cfg.hidden_dim, out.data());
    return out;
}

Tensor context_encode(const Tensor& behavior_embs, std::size_t valid_len, ModelParams& p) {
    if (valid_len == 0) throw ContractViolation("context_encode: valid_len must be >= 1");
    if (behavior_embs.cols() != p.cfg.hidden_dim || valid_len > behavior_embs.rows())
        throw ShapeError("context_encode: input " + behavior_embs.shape_str());
    Tensor compact_in = Tensor::matrix(valid_len, p.cfg.hidden_dim);
    for (std::size_t k = 0; k < valid_len; ++k)
        std::copy(behavior_embs.row(k), behavior_embs.row(k) + p.cfg.hidden_dim,
                  compact_in.row(k));
    num::Graph g;
    ParamNodes pn = ParamNodes::bind(g, p);
    const Tensor& compact = g.value(context_node(g, pn, p, g.constant(std::move(compact_in))));
    Tensor out = Tensor::matrix(behavior_embs.rows(), p.cfg.hidden_dim);
    for (std::size_t k = 0; k < valid_len; ++k)
        std::copy(compact.row(k), compact.row(k) + p.cfg.hidden_dim, out.row(k));
    return out;
}

Tensor aggregate(const Tensor& hidden, std::size_t valid_len, ModelParams& p) {
    if (valid_len == 0) throw ContractViolation("aggregate: valid_len must be >= 1");
    Tensor compact_in = Tensor::matrix(valid_len, p.cfg.hidden_dim);
    for (std::size_t k = 0; k < valid_len; ++k)
        std::copy(hidden.row(k), hidden.row(k) + p.cfg.hidden_dim, compact_in.row(k));
    num::Graph g;
    ParamNodes pn = ParamNodes::bind(g, p);
    return g.value(aggregate_node(g, pn, p, g.constant(std::move(compact_in))));
}

Tensor encode_user(const BehaviorSequence& seq, ModelParams& p) {
    num::Graph g;
    ParamNodes pn = ParamNodes::bind(g, p);
    return g.value(user_embedding_node(g, pn, p, seq));
}

double match(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw ShapeError("match: " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double cosine_similarity(const double* a, const double* b, std::size_t n) {
    double s = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return s / ((std::sqrt(na) + 1e-12) * (std::sqrt(nb) + 1e-12));
}

}  // namespace ub::model
