#pragma once

// Tape-based reverse-mode differentiation over the primitives in ops.hpp.
//
// A Tape records each operation as it is evaluated. Calling backward() on a
// scalar result walks the record in reverse and accumulates gradients into
// every node that depends on a trainable leaf. Values that never reach the
// loss simply keep a zero gradient.
//
// Parameters are bound by address: tape.param(t) returns the same leaf for the
// same Tensor object, so a weight shared across time steps accumulates one
// gradient, retrievable with tape.grad_of(t).

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <unordered_map>

#include "ssanet/ops.hpp"
#include "ssanet/tensor.hpp"

namespace ssanet {

class Tape;

class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

    // A non-recording tape evaluates values only; nothing is kept for backward.
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    Var constant(Tensor value);
    Var variable(Tensor value);
    // Leaf referring to an external tensor, which must outlive the tape.
    Var param(const Tensor& external);

    // Used by operations: appends a node whose gradient is propagated by `fn`.
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    void backward(Var loss);

    Tensor grad(Var v) const;
    Tensor grad_of(const Tensor& external) const;

    // Zero-initialized on first access; operations accumulate into it.
    Tensor& grad_buffer(Var v);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        Backward backward;

        const Tensor& value() const { return external ? *external : owned; }
    };

    const Node& node(Var v) const;
    Node& node(Var v);

    std::deque<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> params_;
    bool record_;
};

Var conv3d(Var input, Var kernel, Var bias, Padding padding = Padding::zeros);
Var conv3d(Var input, Var kernel, Padding padding = Padding::zeros);
Var activation(Var x, Activation kind);
Var sigmoid(Var x);
Var tanh(Var x);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b); // elementwise
Var scale(Var x, real factor);

// (D,H,W,C) x (C) -> (D,H,W,C), channel c multiplied by w[c].
Var scale_channels(Var x, Var w);
Var slice_channels(Var x, std::size_t begin, std::size_t count);

Var global_avg_pool(Var x);
Var downsample2(Var x);

// (in) x (in,out) + (out) -> (out)
Var matvec(Var x, Var weight, Var bias);
Var softmax(Var logits);

// Scalar reductions.
Var sum(Var x);
Var weighted_sum(Var x, const Tensor& weights);
Var abs_sum(Var x);
Var square_sum(Var x);
// -ln(max(probs[label], 1e-12))
Var cross_entropy(Var probs, std::size_t label);

} // namespace ssanet
