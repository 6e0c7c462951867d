#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "fed3d/tensor.hpp"

namespace fed3d {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape resets.
struct Value {
    Tape* tape = nullptr;
    std::uint32_t id = 0;
};

// Eager reverse-mode tape. Each op computes its result immediately and
// records a closure that propagates the node's gradient to its parents.
// One forward/backward pass is confined to one tape (one worker); separate
// tapes share nothing except read-only Parameter values.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf from a plain tensor. requires_grad requests d(loss)/d(input).
    Value input(const Tensor& v, bool requires_grad = false);

    // Leaf backed by a Parameter; gradient flows iff the parameter is
    // trainable. Repeated calls with the same parameter return the same
    // node so accumulation stays correct.
    Value param(Parameter& p);

    // Runs reverse accumulation from a scalar node, then adds leaf
    // gradients into their Parameters (trainable only).
    void backward(Value loss);

    const Tensor& value(Value v) const { return nodes_[v.id].value; }
    // Gradient of the last backward() w.r.t. this node. Zero tensor if the
    // node did not require grad.
    const Tensor& grad(Value v) const;

    void reset();
    std::size_t size() const { return nodes_.size(); }

    // --- internal structure, used by the op implementations ---
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        Parameter* source = nullptr;
        std::function<void(Tape&, const Tensor& upstream)> backprop;
    };

    Value emplace(Tensor value, bool needs_grad,
                  std::function<void(Tape&, const Tensor&)> backprop);
    Node& node(Value v) { return nodes_[v.id]; }
    const Node& node(Value v) const { return nodes_[v.id]; }
    void accumulate_grad(Value v, const Tensor& g);

  private:
    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
    Tensor zero_scratch_;
};

// ---- operations -----------------------------------------------------

// Matrix product a[m,k] * b[k,n]. Throws ShapeError naming both shapes on
// inner-extent mismatch.
Value matmul(Value a, Value b);
// a[m,k] * transpose(b[n,k]) without materializing the transpose.
Value matmul_nt(Value a, Value b);

Value add(Value a, Value b);                 // same shape
Value add_rowvec(Value a, Value bias);       // bias[n] added to each row of a[m,n]
Value scale(Value a, double c);
Value concat_rows(Value a, Value b);         // [m1,n] ++ [m2,n] -> [m1+m2,n]
Value concat_cols(const std::vector<Value>& parts);
Value softmax_rows(Value a);                 // stable, max-subtracted
Value gelu(Value a);                         // exact erf form
Value group_maxpool(Value a, std::size_t groups);  // [N,d] -> [groups,d]
Value mean_rows(Value a);                    // [m,n] -> [1,n]
Value stack_rows(const std::vector<Value>& rows);  // B x [1,n] -> [B,n]
Value sum_all(Value a);                      // -> scalar [1]

// (1/B) * sum_i weights[i] * scalars[i]; weights are constants.
Value weighted_mean(const std::vector<Value>& scalars, const std::vector<double>& weights);

struct CrossEntropyOut {
    Value loss;                     // scalar, mean over the batch
    std::vector<double> true_prob;  // softmax probability of each true class
};

// Mean cross entropy of logits[B,O] against integer labels. Gradient
// w.r.t. logits is (softmax - onehot)/B. Exposes per-sample true-class
// probabilities. Out-of-range labels raise DomainError naming the sample.
CrossEntropyOut cross_entropy(Value logits, const std::vector<int>& labels);

// Stable softmax of a plain vector (helper shared with evaluation code).
std::vector<double> softmax_values(const std::vector<double>& v);

}  // namespace fed3d
