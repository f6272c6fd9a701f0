#pragma once

#include <functional>
#include <vector>

#include "styleddg/tensor.hpp"

namespace styleddg {

// Reverse-mode tape over Tensor4 values. A fresh tape is built for every
// forward pass; node creation order is a topological order, so backward()
// walks ids in reverse and visits each node exactly once.
//
// Broadcasting: binary elementwise ops accept operands whose dims either
// match or are 1 on one side (per dimension). Gradients are sum-reduced
// back over broadcast dims.
class Tape {
public:
    using NodeId = int;

    // Leaves. Params take gradients; constants never do (e.g. neighbor
    // style statistics enter the graph as constants).
    NodeId param(Tensor4 v);
    NodeId constant(Tensor4 v);

    // Network primitives
    NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride = 1, int pad = 0);
    NodeId relu(NodeId x);
    NodeId avg_pool2d(NodeId x, int k);
    NodeId global_avg_pool(NodeId x);  // (B,C,H,W) -> (B,C,1,1)
    // weight (out,in,1,1) applied to flattened (B,*,*,*) -> (B,out,1,1)
    NodeId linear(NodeId x, NodeId w, NodeId b);
    // logits (B,K,1,1), labels in [0,K) -> scalar (1,1,1,1), mean over batch
    NodeId softmax_cross_entropy(NodeId logits, const std::vector<int>& labels);

    // Elementwise with broadcasting
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    // a*x + b, scalar coefficients
    NodeId affine(NodeId x, double a, double b);
    // forward sqrt(max(x + eps, 0)); backward 0.5/max(s, dmin) so the
    // derivative stays finite at exactly-zero variance
    NodeId sqrt_guard(NodeId x, double eps, double dmin = 1e-12);

    // Reductions / reshuffles
    NodeId mean_hw(NodeId x);  // (B,C,H,W) -> (B,C,1,1)
    NodeId mean_b(NodeId x);   // (B,C,H,W) -> (1,C,H,W)
    NodeId gather_b(NodeId x, std::vector<int> idx);  // out[i] = x[idx[i]]
    NodeId concat_b(NodeId a, NodeId b);
    NodeId sum_all(NodeId x);  // -> (1,1,1,1)

    void backward(NodeId loss);

    const Tensor4& val(NodeId id) const { return nodes_[check(id)].val; }
    const Tensor4& grad(NodeId id) const;
    bool requires_grad(NodeId id) const { return nodes_[check(id)].requires_grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor4 val;
        Tensor4 grad;
        bool requires_grad = false;
        bool grad_ready = false;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    int check(NodeId id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw StateError("Tape: invalid node id " + std::to_string(id));
        return id;
    }
    NodeId push(Tensor4 v, bool req, std::function<void(Tape&)> back);
    Tensor4& grad_buf(NodeId id) { return nodes_[id].grad; }
    void accumulate(NodeId id, int flat, double g) { nodes_[id].grad.data()[flat] += g; }

    // helper shared by add/sub/mul/div
    NodeId binary_ew(NodeId a, NodeId b, int op);

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

}  // namespace styleddg
