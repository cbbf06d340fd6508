#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "textclass/tensor.hpp"

namespace textclass::autodiff {

// Eager reverse-mode autodiff over dense 2-D tensors. Operations evaluate
// immediately and append a node to the owning Graph's tape; backward()
// replays the tape in reverse. A Graph is confined to one thread.

class Graph;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::string op;  // empty for leaves
    std::vector<Node*> parents;
    std::function<void(Node&)> backward_fn;  // accumulates into parents' grads

    Node(Tensor v, bool req) : value(std::move(v)), grad(value.rows(), value.cols()),
                               requires_grad(req) {}
};

using NodeRef = Node*;

class Graph {
  public:
    // Leaves. `param` marks trainable tensors (requires_grad = true).
    NodeRef leaf(Tensor value, bool requires_grad = false);
    NodeRef param(Tensor value) { return leaf(std::move(value), true); }
    NodeRef constant(Tensor value) { return leaf(std::move(value), false); }

    // Primitives (shapes checked; mismatches raise ShapeError naming the op)
    NodeRef matmul(NodeRef a, NodeRef b);
    NodeRef matmul_nt(NodeRef a, NodeRef b);  // a * b^T
    NodeRef add(NodeRef a, NodeRef b);
    NodeRef sub(NodeRef a, NodeRef b);
    NodeRef add_bias_row(NodeRef x, NodeRef bias);  // bias is 1 x C, added to every row
    NodeRef multiply(NodeRef a, NodeRef b);         // elementwise
    NodeRef scale(NodeRef a, double c);
    NodeRef relu(NodeRef a);
    NodeRef softmax_rows(NodeRef a);
    // Normalizes each row to mean 0 / variance 1 (epsilon 1e-5 inside the
    // square root), then applies the learned per-column scale and shift.
    NodeRef layer_norm_rows(NodeRef x, NodeRef gamma, NodeRef beta);
    // Selects rows of `table` by id; ids are fixed integers, not nodes.
    NodeRef embedding_gather(NodeRef table, const std::vector<int>& ids);
    NodeRef take_rows(NodeRef x, const std::vector<int>& rows);
    NodeRef concat_cols(const std::vector<NodeRef>& parts);
    // Mean over rows i with mask[i] == 1; output is 1 x C.
    NodeRef masked_mean_rows(NodeRef x, const std::vector<int>& mask);
    NodeRef sum(NodeRef a);   // 1x1
    NodeRef mean(NodeRef a);  // 1x1
    // Mean over samples of -log(p[i, label_i]); probabilities clamped at
    // 1e-15. Output is 1x1.
    NodeRef cross_entropy_probs(NodeRef probs, const std::vector<int>& labels);

    // Reverse pass from a scalar (1x1) root. Leaf grads accumulate; call
    // zero_grads() between backward passes.
    void backward(NodeRef root);
    void zero_grads();

    size_t size() const { return tape_.size(); }

  private:
    NodeRef record(Tensor value, std::string op, std::vector<NodeRef> parents,
                   std::function<void(Node&)> backward_fn);
    std::vector<std::unique_ptr<Node>> tape_;
};

// Max over coordinates of x of the relative disagreement between the
// analytic gradient of f at x and central finite differences with step h:
// |a - n| / (|a| + |n| + 1e-12).
double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                  const Tensor& analytic_grad, double h);

}  // namespace textclass::autodiff
