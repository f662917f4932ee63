#include "graph.hpp"

#include <algorithm>
#include <cmath>

namespace ub::num {

namespace {

// C[m x n] += A[m x k] * B[k x n]
void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = b.row(p);
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* br = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
            cr[j] += s;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a.row(i);
        const double* br = b.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            double* cr = c.row(p);
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

double vec_norm(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
    return std::sqrt(s);
}

}  // namespace

NodeRef Graph::check(NodeRef r, const char* opname) const {
    if (!r.valid() || static_cast<std::size_t>(r.id) >= nodes_.size())
        throw ShapeError(std::string(opname) + ": invalid node reference");
    return r;
}

int Graph::push(Node n, const char* opname) {
    if (n.op != Op::Param) n.val = &n.owned;
    nodes_.push_back(std::move(n));
    nodes_.back().val = nodes_.back().op == Op::Param ? &nodes_.back().pg->value
                                                     : &nodes_.back().owned;
    nodes_.back().val->check_finite(opname);
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_of(int id) {
    Node& n = nodes_[id];
    if (!n.grad_ready) {
        n.grad = Tensor(n.val->shape());
        n.grad_ready = true;
    }
    return n.grad;
}

NodeRef Graph::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.owned = std::move(t);
    return {push(std::move(n), "constant")};
}

NodeRef Graph::param(ParamGroup& pg) {
    Node n;
    n.op = Op::Param;
    n.pg = &pg;
    return {push(std::move(n), pg.name.c_str())};
}

NodeRef Graph::rows(NodeRef table, std::vector<std::size_t> indices) {
    check(table, "rows");
    const Tensor& t = val(table.id);
    if (t.rank() != 2) throw ShapeError("rows: table must be rank 2, got " + t.shape_str());
    for (std::size_t i : indices)
        if (i >= t.rows())
            throw ShapeError("rows: index " + std::to_string(i) + " out of table " +
                             t.shape_str());
    Node n;
    n.op = Op::Rows;
    n.parents = {table.id};
    n.idx = std::move(indices);
    n.owned = Tensor::matrix(n.idx.size(), t.cols());
    for (std::size_t i = 0; i < n.idx.size(); ++i)
        std::copy(t.row(n.idx[i]), t.row(n.idx[i]) + t.cols(), n.owned.row(i));
    return {push(std::move(n), "rows")};
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
    check(a, "matmul");
    check(b, "matmul");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    if (ta.cols() != tb.rows())
        throw ShapeError("matmul: " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.parents = {a.id, b.id};
    n.owned = Tensor::matrix(ta.rows(), tb.cols());
    mm_nn_acc(ta, tb, n.owned);
    return {push(std::move(n), "matmul")};
}

NodeRef Graph::matmul_nt(NodeRef a, NodeRef b) {
    check(a, "matmul_nt");
    check(b, "matmul_nt");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    if (ta.cols() != tb.cols())
        throw ShapeError("matmul_nt: " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::MatMulNT;
    n.parents = {a.id, b.id};
    n.owned = Tensor::matrix(ta.rows(), tb.rows());
    mm_nt_acc(ta, tb, n.owned);
    return {push(std::move(n), "matmul_nt")};
}

NodeRef Graph::add(NodeRef a, NodeRef b) {
    check(a, "add");
    check(b, "add");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    require_same_shape(ta, tb, "add");
    Node n;
    n.op = Op::Add;
    n.parents = {a.id, b.id};
    n.owned = ta;
    for (std::size_t i = 0; i < tb.size(); ++i) n.owned[i] += tb[i];
    return {push(std::move(n), "add")};
}

NodeRef Graph::scale(NodeRef a, double c) {
    check(a, "scale");
    Node n;
    n.op = Op::Scale;
    n.parents = {a.id};
    n.c = c;
    n.owned = val(a.id);
    for (std::size_t i = 0; i < n.owned.size(); ++i) n.owned[i] *= c;
    return {push(std::move(n), "scale")};
}

NodeRef Graph::tanh_activate(NodeRef a) {
    check(a, "tanh");
    Node n;
    n.op = Op::Tanh;
    n.parents = {a.id};
    n.owned = val(a.id);
    for (std::size_t i = 0; i < n.owned.size(); ++i) n.owned[i] = std::tanh(n.owned[i]);
    return {push(std::move(n), "tanh")};
}

NodeRef Graph::softmax_rows(NodeRef a) {
    check(a, "softmax_rows");
    Node n;
    n.op = Op::SoftmaxRows;
    n.parents = {a.id};
    n.owned = val(a.id);
    const std::size_t cols = n.owned.cols();
    for (std::size_t r = 0; r < n.owned.rows(); ++r) {
        double* row = n.owned.row(r);
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        for (std::size_t j = 0; j < cols; ++j) row[j] /= s;
    }
    return {push(std::move(n), "softmax_rows")};
}

NodeRef Graph::slice_cols(NodeRef a, std::size_t c0, std::size_t c1) {
    check(a, "slice_cols");
    const Tensor& t = val(a.id);
    if (c0 >= c1 || c1 > t.cols())
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") of " + t.shape_str());
    Node n;
    n.op = Op::SliceCols;
    n.parents = {a.id};
    n.a0 = c0;
    n.a1 = c1;
    n.owned = Tensor::matrix(t.rows(), c1 - c0);
    for (std::size_t r = 0; r < t.rows(); ++r)
        std::copy(t.row(r) + c0, t.row(r) + c1, n.owned.row(r));
    return {push(std::move(n), "slice_cols")};
}

NodeRef Graph::concat_cols(const std::vector<NodeRef>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    std::size_t rows = 0, cols = 0;
    for (NodeRef p : parts) {
        check(p, "concat_cols");
        const Tensor& t = val(p.id);
        if (rows == 0) rows = t.rows();
        if (t.rows() != rows)
            throw ShapeError("concat_cols: row mismatch " + t.shape_str());
        cols += t.cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.owned = Tensor::matrix(rows, cols);
    std::size_t off = 0;
    for (NodeRef p : parts) {
        const Tensor& t = val(p.id);
        n.parents.push_back(p.id);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(t.row(r), t.row(r) + t.cols(), n.owned.row(r) + off);
        off += t.cols();
    }
    return {push(std::move(n), "concat_cols")};
}

NodeRef Graph::pick_row(NodeRef a, std::size_t r) {
    check(a, "pick_row");
    const Tensor& t = val(a.id);
    if (r >= t.rows())
        throw ShapeError("pick_row: row " + std::to_string(r) + " of " + t.shape_str());
    Node n;
    n.op = Op::PickRow;
    n.parents = {a.id};
    n.a0 = r;
    n.owned = Tensor::vector(t.cols());
    std::copy(t.row(r), t.row(r) + t.cols(), n.owned.data());
    return {push(std::move(n), "pick_row")};
}

NodeRef Graph::dot(NodeRef a, NodeRef b) {
    check(a, "dot");
    check(b, "dot");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    if (ta.size() != tb.size())
        throw ShapeError("dot: " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::Dot;
    n.parents = {a.id, b.id};
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
    n.owned = Tensor::scalar(s);
    return {push(std::move(n), "dot")};
}

NodeRef Graph::cosine(NodeRef a, NodeRef b) {
    check(a, "cosine");
    check(b, "cosine");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    if (ta.size() != tb.size())
        throw ShapeError("cosine: " + ta.shape_str() + " vs " + tb.shape_str());
    Node n;
    n.op = Op::Cosine;
    n.parents = {a.id, b.id};
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
    // 1e-12 added to each norm so all-zero padding rows stay defined
    const double na = vec_norm(ta) + 1e-12;
    const double nb = vec_norm(tb) + 1e-12;
    n.owned = Tensor::scalar(s / (na * nb));
    return {push(std::move(n), "cosine")};
}

NodeRef Graph::cross_entropy_logits(NodeRef logits, std::size_t label) {
    check(logits, "cross_entropy");
    const Tensor& t = val(logits.id);
    if (label >= t.size())
        throw ShapeError("cross_entropy: label " + std::to_string(label) + " of " +
                         t.shape_str());
    Node n;
    n.op = Op::CrossEntropy;
    n.parents = {logits.id};
    n.a0 = label;
    // stable log-softmax; softmax probs cached for backward
    double mx = t[0];
    for (std::size_t i = 1; i < t.size(); ++i) mx = std::max(mx, t[i]);
    double z = 0.0;
    n.aux = Tensor::vector(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        n.aux[i] = std::exp(t[i] - mx);
        z += n.aux[i];
    }
    for (std::size_t i = 0; i < t.size(); ++i) n.aux[i] /= z;
    n.owned = Tensor::scalar(std::log(z) - (t[label] - mx));
    return {push(std::move(n), "cross_entropy")};
}

NodeRef Graph::bce_logits(NodeRef score, double label) {
    check(score, "bce_logits");
    const Tensor& t = val(score.id);
    if (t.size() != 1) throw ShapeError("bce_logits: score must be scalar, got " + t.shape_str());
    Node n;
    n.op = Op::BceLogits;
    n.parents = {score.id};
    n.c = label;
    const double s = t[0];
    n.owned = Tensor::scalar(std::max(s, 0.0) - s * label + std::log1p(std::exp(-std::abs(s))));
    return {push(std::move(n), "bce_logits")};
}

NodeRef Graph::mean(const std::vector<NodeRef>& scalars) {
    if (scalars.empty()) throw ShapeError("mean: no inputs");
    Node n;
    n.op = Op::Mean;
    double s = 0.0;
    for (NodeRef r : scalars) {
        check(r, "mean");
        const Tensor& t = val(r.id);
        if (t.size() != 1) throw ShapeError("mean: non-scalar input " + t.shape_str());
        n.parents.push_back(r.id);
        s += t[0];
    }
    n.owned = Tensor::scalar(s / static_cast<double>(scalars.size()));
    return {push(std::move(n), "mean")};
}

const Tensor& Graph::value(NodeRef r) const {
    check(r, "value");
    return val(r.id);
}

double Graph::scalar_value(NodeRef r) const {
    const Tensor& t = value(r);
    if (t.size() != 1) throw ShapeError("scalar_value: " + t.shape_str());
    return t[0];
}

void Graph::backward(NodeRef loss) {
    check(loss, "backward");
    if (val(loss.id).size() != 1)
        throw ShapeError("backward: loss must be scalar, got " + val(loss.id).shape_str());
    grad_of(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        if (!nodes_[id].grad_ready) continue;
        backward_node(id);
    }
    // single flush per param node keeps cross-graph accumulation order stable
    for (Node& n : nodes_) {
        if (n.op == Op::Param && n.grad_ready) {
            Tensor& g = n.pg->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
            n.grad.fill(0.0);
        }
    }
}

void Graph::backward_node(int id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::Constant:
        case Op::Param:
            break;
        case Op::Rows: {
            Tensor& pg = grad_of(n.parents[0]);
            const std::size_t cols = pg.cols();
            for (std::size_t i = 0; i < n.idx.size(); ++i) {
                double* dst = pg.row(n.idx[i]);
                const double* src = g.row(i);
                for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
            }
            break;
        }
        case Op::MatMul: {
            const Tensor& a = val(n.parents[0]);
            const Tensor& b = val(n.parents[1]);
            mm_nt_acc(g, b, grad_of(n.parents[0]));  // dA = dC * B^T
            mm_tn_acc(a, g, grad_of(n.parents[1]));  // dB = A^T * dC
            break;
        }
        case Op::MatMulNT: {
            // C = A * B^T : dA = dC * B, dB = dC^T * A
            const Tensor& a = val(n.parents[0]);
            const Tensor& b = val(n.parents[1]);
            mm_nn_acc(g, b, grad_of(n.parents[0]));
            mm_tn_acc(g, a, grad_of(n.parents[1]));
            break;
        }
        case Op::Add: {
            for (int k = 0; k < 2; ++k) {
                Tensor& pg = grad_of(n.parents[k]);
                for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
            }
            break;
        }
        case Op::Scale: {
            Tensor& pg = grad_of(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += n.c * g[i];
            break;
        }
        case Op::Tanh: {
            Tensor& pg = grad_of(n.parents[0]);
            const Tensor& y = *n.val;
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += (1.0 - y[i] * y[i]) * g[i];
            break;
        }
        case Op::SoftmaxRows: {
            Tensor& pg = grad_of(n.parents[0]);
            const Tensor& y = *n.val;
            const std::size_t cols = y.cols();
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double* yr = y.row(r);
                const double* gr = g.row(r);
                double dotv = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dotv += yr[j] * gr[j];
                double* pr = pg.row(r);
                for (std::size_t j = 0; j < cols; ++j) pr[j] += yr[j] * (gr[j] - dotv);
            }
            break;
        }
        case Op::SliceCols: {
            Tensor& pg = grad_of(n.parents[0]);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                double* dst = pg.row(r) + n.a0;
                const double* src = g.row(r);
                for (std::size_t j = 0; j < g.cols(); ++j) dst[j] += src[j];
            }
            break;
        }
        case Op::ConcatCols: {
            std::size_t off = 0;
            for (int pid : n.parents) {
                Tensor& pg = grad_of(pid);
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    const double* src = g.row(r) + off;
                    double* dst = pg.row(r);
                    for (std::size_t j = 0; j < pg.cols(); ++j) dst[j] += src[j];
                }
                off += pg.cols();
            }
            break;
        }
        case Op::PickRow: {
            Tensor& pg = grad_of(n.parents[0]);
            double* dst = pg.row(n.a0);
            for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
            break;
        }
        case Op::Dot: {
            const Tensor& a = val(n.parents[0]);
            const Tensor& b = val(n.parents[1]);
            const double gv = g[0];
            Tensor& ga = grad_of(n.parents[0]);
            Tensor& gb = grad_of(n.parents[1]);
            for (std::size_t i = 0; i < a.size(); ++i) {
                ga[i] += gv * b[i];
                gb[i] += gv * a[i];
            }
            break;
        }
        case Op::Cosine: {
            const Tensor& a = val(n.parents[0]);
            const Tensor& b = val(n.parents[1]);
            const double gv = g[0];
            const double raw_na = vec_norm(a);
            const double raw_nb = vec_norm(b);
            const double na = raw_na + 1e-12;
            const double nb = raw_nb + 1e-12;
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
            Tensor& ga = grad_of(n.parents[0]);
            Tensor& gb = grad_of(n.parents[1]);
            const double inv = 1.0 / (na * nb);
            const double ca = raw_na > 0.0 ? s / (na * na * raw_na * nb) : 0.0;
            const double cb = raw_nb > 0.0 ? s / (nb * nb * raw_nb * na) : 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                ga[i] += gv * (b[i] * inv - ca * a[i]);
                gb[i] += gv * (a[i] * inv - cb * b[i]);
            }
            break;
        }
        case Op::CrossEntropy: {
            Tensor& pg = grad_of(n.parents[0]);
            const double gv = g[0];
            for (std::size_t i = 0; i < n.aux.size(); ++i)
                pg[i] += gv * (n.aux[i] - (i == n.a0 ? 1.0 : 0.0));
            break;
        }
        case Op::BceLogits: {
            const double s = val(n.parents[0])[0];
            const double sig = 1.0 / (1.0 + std::exp(-s));
            grad_of(n.parents[0])[0] += g[0] * (sig - n.c);
            break;
        }
        case Op::Mean: {
            const double gv = g[0] / static_cast<double>(n.parents.size());
            for (int pid : n.parents) grad_of(pid)[0] += gv;
            break;
        }
    }
}

void adam_step(std::vector<ParamGroup*> params, double lr, double beta1, double beta2,
               double eps) {
    if (lr <= 0.0) throw ConfigError("adam_step: lr must be positive");
    for (ParamGroup* p : params) {
        p->step_count += 1;
        const double t = static_cast<double>(p->step_count);
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        Tensor& v = p->value;
        Tensor& g = p->grad;
        Tensor& m1 = p->adam_m;
        Tensor& m2 = p->adam_v;
        for (std::size_t i = 0; i < v.size(); ++i) {
            m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
            m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m1[i] / bc1;
            const double vhat = m2[i] / bc2;
            v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        v.check_finite("adam_step(" + p->name + ")");
        p->zero_grad();
    }
}

double finite_diff_check(const std::function<double(bool)>& loss,
                         std::vector<ParamGroup*> params, double epsilon) {
    std::size_t total = 0;
    for (ParamGroup* p : params) total += p->value.size();
    if (total > 10000)
        throw ContractViolation("finite_diff_check: too many scalars (" +
                                std::to_string(total) + " > 10000)");
    for (ParamGroup* p : params) p->zero_grad();
    loss(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (ParamGroup* p : params) analytic.push_back(p->grad);

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamGroup* p = params[pi];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + epsilon;
            const double fp = loss(false);
            p->value[i] = orig - epsilon;
            const double fm = loss(false);
            p->value[i] = orig;
            const double cd = (fp - fm) / (2.0 * epsilon);
            const double an = analytic[pi][i];
            const double rel =
                std::abs(an - cd) / std::max({std::abs(an), std::abs(cd), 1e-12});
            max_rel = std::max(max_rel, rel);
        }
    }
    for (ParamGroup* p : params) p->zero_grad();
    return max_rel;
}

}  // namespace ub::num
