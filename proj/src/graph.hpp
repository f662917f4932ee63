#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ub::num {

// One named learnable array plus its gradient and Adam state.
struct ParamGroup {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    long long step_count = 0;

    ParamGroup() = default;
    ParamGroup(std::string n, Tensor v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(value.shape()),
          adam_m(value.shape()),
          adam_v(value.shape()) {}

    void zero_grad() { grad.fill(0.0); }
};

struct NodeRef {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode graph over the fixed primitive set the model needs.
// A graph is built once per loss evaluation; backward() accumulates into the
// bound ParamGroup grads (one flush per param per call), so a joint loss can
// be computed as two builds + two backward passes.
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    NodeRef constant(Tensor t);
    NodeRef param(ParamGroup& pg);

    // Gather rows of a table [V x d] by index -> [n x d].
    NodeRef rows(NodeRef table, std::vector<std::size_t> indices);

    NodeRef matmul(NodeRef a, NodeRef b);     // A[m x k] * B[k x n]
    NodeRef matmul_nt(NodeRef a, NodeRef b);  // A[m x k] * B[n x k]^T
    NodeRef add(NodeRef a, NodeRef b);
    NodeRef scale(NodeRef a, double c);
    NodeRef tanh_activate(NodeRef a);
    NodeRef softmax_rows(NodeRef a);
    NodeRef slice_cols(NodeRef a, std::size_t c0, std::size_t c1);
    NodeRef concat_cols(const std::vector<NodeRef>& parts);
    NodeRef pick_row(NodeRef a, std::size_t r);  // [m x n] -> [n]

    NodeRef dot(NodeRef a, NodeRef b);     // flat vectors -> scalar
    NodeRef cosine(NodeRef a, NodeRef b);  // scalar, zero-norm guarded
    NodeRef cross_entropy_logits(NodeRef logits, std::size_t label);  // scalar
    NodeRef bce_logits(NodeRef score, double label);                  // scalar
    NodeRef mean(const std::vector<NodeRef>& scalars);

    const Tensor& value(NodeRef r) const;
    double scalar_value(NodeRef r) const;

    // Reverse pass from a scalar loss. Param grads accumulate; caller zeroes.
    void backward(NodeRef loss);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op {
        Constant,
        Param,
        Rows,
        MatMul,
        MatMulNT,
        Add,
        Scale,
        Tanh,
        SoftmaxRows,
        SliceCols,
        ConcatCols,
        PickRow,
        Dot,
        Cosine,
        CrossEntropy,
        BceLogits,
        Mean,
    };

    struct Node {
        Op op;
        Tensor owned;              // value storage (unused for Param)
        const Tensor* val = nullptr;
        Tensor grad;               // allocated lazily in backward
        bool grad_ready = false;
        std::vector<int> parents;
        ParamGroup* pg = nullptr;      // Param
        std::vector<std::size_t> idx;  // Rows
        std::size_t a0 = 0, a1 = 0;    // SliceCols bounds / CrossEntropy label
        double c = 0.0;                // Scale factor / Bce label
        Tensor aux;                    // cached softmax probs etc.
    };

    const Tensor& val(int id) const { return *nodes_[id].val; }
    Tensor& grad_of(int id);
    int push(Node n, const char* opname);
    NodeRef check(NodeRef r, const char* opname) const;
    void backward_node(int id);

    // deque keeps node references stable while the graph grows
    std::deque<Node> nodes_;
};

// Standard Adam with bias correction; grads are zeroed after the update.
// The PAD embedding row is excluded upstream by zeroing its grad.
void adam_step(std::vector<ParamGroup*> params, double lr, double beta1, double beta2,
               double eps);

// Central finite differences over every param scalar against the analytic
// grads produced by `loss(true)`. `loss(false)` must return the forward value
// without touching grads. Returns the max relative error.
double finite_diff_check(const std::function<double(bool)>& loss,
                         std::vector<ParamGroup*> params, double epsilon);

}  // namespace ub::num
