#include "ssanet/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ssanet {

const Tensor& Var::value() const {
    if (!tape_) throw std::logic_error("Var: use of an unbound variable");
    return tape_->value(*this);
}

const Tape::Node& Tape::node(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::logic_error("Tape: variable belongs to another tape");
    return nodes_[v.id_];
}

Tape::Node& Tape::node(Var v) {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::logic_error("Tape: variable belongs to another tape");
    return nodes_[v.id_];
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), nullptr, Tensor(), false, false, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), nullptr, Tensor(), false, record_, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Tensor& external) {
    if (auto it = params_.find(&external); it != params_.end()) return Var(this, it->second);
    nodes_.push_back(Node{Tensor(), &external, Tensor(), false, record_, {}});
    params_.emplace(&external, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
    bool needs = false;
    if (record_) {
        for (const Var& in : inputs) needs = needs || node(in).requires_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, Tensor(), false, needs, needs ? std::move(fn) : Backward{}});
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return node(v).value(); }

Tensor& Tape::grad_buffer(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
        n.grad = Tensor(n.value().shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (!record_) throw std::logic_error("Tape::backward: tape was created without recording");
    const Node& root = node(loss);
    if (root.value().size() != 1) {
        throw std::invalid_argument("Tape::backward: loss must be a scalar, got shape " + root.value().shape().str());
    }
    grad_buffer(loss)[0] += 1.0f;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : Tensor(n.value().shape());
}

Tensor Tape::grad_of(const Tensor& external) const {
    auto it = params_.find(&external);
    if (it == params_.end()) return Tensor(external.shape());
    return grad(Var(const_cast<Tape*>(this), it->second));
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
}

Tensor scalar_result(double v) { return Tensor::scalar(static_cast<real>(v)); }

} // namespace

Var conv3d(Var input, Var kernel, Var bias, Padding padding) {
    Tensor out = conv3d(input.value(), kernel.value(), bias.value(), padding);
    return input.tape().record(std::move(out), {input, kernel, bias}, [=](Tape& t, const Tensor& g) {
        kernels::conv3d_backward(t.value(input), t.value(kernel), g,
                                 t.requires_grad(input) ? &t.grad_buffer(input) : nullptr,
                                 t.requires_grad(kernel) ? &t.grad_buffer(kernel) : nullptr,
                                 t.requires_grad(bias) ? &t.grad_buffer(bias) : nullptr, padding);
    });
}

Var conv3d(Var input, Var kernel, Padding padding) {
    Tensor out = conv3d(input.value(), kernel.value(), padding);
    return input.tape().record(std::move(out), {input, kernel}, [=](Tape& t, const Tensor& g) {
        kernels::conv3d_backward(t.value(input), t.value(kernel), g,
                                 t.requires_grad(input) ? &t.grad_buffer(input) : nullptr,
                                 t.requires_grad(kernel) ? &t.grad_buffer(kernel) : nullptr, nullptr, padding);
    });
}

Var activation(Var x, Activation kind) {
    if (kind == Activation::linear) return x;
    Tensor out = activation(x.value(), kind);
    return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
        const Tensor& in = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < in.size(); ++i) {
            gx[i] += g[i] * activate_derivative(in[i], activate(in[i], kind), kind);
        }
    });
}

Var sigmoid(Var x) { return activation(x, Activation::sigmoid); }
Var tanh(Var x) { return activation(x, Activation::tanh); }

Var operator+(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
        for (Var v : {a, b}) {
            if (!t.requires_grad(v)) continue;
            Tensor& gv = t.grad_buffer(v);
            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
    });
}

Var operator-(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var operator*(Var a, Var b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv2 = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var x, real factor) {
    Tensor out = x.value();
    for (auto& v : out.data()) v *= factor;
    return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
}

Var scale_channels(Var x, Var w) {
    const VolumeDims dims = volume_dims(x.value(), "scale_channels");
    if (w.shape().rank() != 1 || w.shape()[0] != dims.channels) {
        throw std::invalid_argument("scale_channels: weights " + w.shape().str() + " do not match input " +
                                    x.shape().str());
    }
    const std::size_t C = dims.channels;
    Tensor out = x.value();
    const Tensor& wv = w.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= wv[i % C];
    return x.tape().record(std::move(out), {x, w}, [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        const Tensor& wv2 = t.value(w);
        if (t.requires_grad(x)) {
            Tensor& gx = t.grad_buffer(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * wv2[i % C];
        }
        if (t.requires_grad(w)) {
            std::vector<double> acc(C, 0.0);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i % C] += static_cast<double>(g[i]) * xv[i];
            Tensor& gw = t.grad_buffer(w);
            for (std::size_t c = 0; c < C; ++c) gw[c] += static_cast<real>(acc[c]);
        }
    });
}

Var slice_channels(Var x, std::size_t begin, std::size_t count) {
    const VolumeDims dims = volume_dims(x.value(), "slice_channels");
    if (count == 0 || begin + count > dims.channels) {
        throw std::invalid_argument("slice_channels: range [" + std::to_string(begin) + ", " +
                                    std::to_string(begin + count) + ") outside " + x.shape().str());
    }
    const std::size_t C = dims.channels;
    Tensor out(Shape{dims.depth, dims.height, dims.width, count});
    const Tensor& xv = x.value();
    for (std::size_t v = 0; v < dims.voxels(); ++v) {
        std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(v * C + begin), count,
                    out.data().begin() + static_cast<std::ptrdiff_t>(v * count));
    }
    return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t v = 0; v < dims.voxels(); ++v) {
            for (std::size_t c = 0; c < count; ++c) gx[v * C + begin + c] += g[v * count + c];
        }
    });
}

Var global_avg_pool(Var x) {
    Tensor out = global_avg_pool(x.value());
    const VolumeDims dims = volume_dims(x.value(), "global_avg_pool");
    return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        const real inv = 1.0f / static_cast<real>(dims.voxels());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i % dims.channels] * inv;
    });
}

Var downsample2(Var x) {
    Tensor out = downsample2(x.value());
    return x.tape().record(std::move(out), {x},
                           [=](Tape& t, const Tensor& g) { kernels::downsample2_backward(g, t.grad_buffer(x)); });
}

Var matvec(Var x, Var weight, Var bias) {
    const Shape& ws = weight.shape();
    if (x.shape().rank() != 1 || ws.rank() != 2 || ws[0] != x.shape()[0] || bias.shape().rank() != 1 ||
        bias.shape()[0] != ws[1]) {
        throw std::invalid_argument("dense: input " + x.shape().str() + " incompatible with weight " + ws.str() +
                                    " and bias " + bias.shape().str());
    }
    const auto in = static_cast<Eigen::Index>(ws[0]);
    const auto out_n = static_cast<Eigen::Index>(ws[1]);
    using RowMatrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Tensor out = bias.value();
    Eigen::Map<Eigen::RowVectorX<real>> y(out.data().data(), out_n);
    y.noalias() += Eigen::Map<const Eigen::RowVectorX<real>>(x.value().data().data(), in) *
                   Eigen::Map<const RowMatrix>(weight.value().data().data(), in, out_n);
    return x.tape().record(std::move(out), {x, weight, bias}, [=](Tape& t, const Tensor& g) {
        Eigen::Map<const Eigen::RowVectorX<real>> gy(g.data().data(), out_n);
        if (t.requires_grad(x)) {
            Eigen::Map<Eigen::RowVectorX<real>>(t.grad_buffer(x).data().data(), in).noalias() +=
                gy * Eigen::Map<const RowMatrix>(t.value(weight).data().data(), in, out_n).transpose();
        }
        if (t.requires_grad(weight)) {
            Eigen::Map<RowMatrix>(t.grad_buffer(weight).data().data(), in, out_n).noalias() +=
                Eigen::Map<const Eigen::VectorX<real>>(t.value(x).data().data(), in) * gy;
        }
        if (t.requires_grad(bias)) {
            Eigen::Map<Eigen::RowVectorX<real>>(t.grad_buffer(bias).data().data(), out_n) += gy;
        }
    });
}

Var softmax(Var logits) {
    Tensor out = softmax(logits.value());
    Tape& tape = logits.tape();
    const Tensor probs = out;
    return tape.record(std::move(out), {logits}, [logits, probs](Tape& t, const Tensor& g) {
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += static_cast<double>(g[i]) * probs[i];
        Tensor& gx = t.grad_buffer(logits);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += probs[i] * static_cast<real>(g[i] - dot);
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (real v : x.value().data()) s += v;
    return x.tape().record(scalar_result(s), {x}, [=](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (auto& v : gx.data()) v += g[0];
    });
}

Var weighted_sum(Var x, const Tensor& weights) {
    if (weights.shape() != x.shape()) {
        throw std::invalid_argument("weighted_sum: weights " + weights.shape().str() + " do not match " +
                                    x.shape().str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += static_cast<double>(weights[i]) * x.value()[i];
    return x.tape().record(scalar_result(s), {x}, [x, weights](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * weights[i];
    });
}

Var abs_sum(Var x) {
    double s = 0.0;
    for (real v : x.value().data()) s += std::fabs(v);
    return x.tape().record(scalar_result(s), {x}, [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += g[0] * static_cast<real>((xv[i] > 0.0f) - (xv[i] < 0.0f));
        }
    });
}

Var square_sum(Var x) {
    double s = 0.0;
    for (real v : x.value().data()) s += static_cast<double>(v) * v;
    return x.tape().record(scalar_result(s), {x}, [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0f * g[0] * xv[i];
    });
}

Var cross_entropy(Var probs, std::size_t label) {
    if (probs.shape().rank() != 1 || label >= probs.shape()[0]) {
        throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " outside " +
                                    probs.shape().str());
    }
    constexpr real kFloor = 1e-12f;
    const real p = probs.value()[label];
    const real clamped = std::max(p, kFloor);
    return probs.tape().record(scalar_result(-std::log(static_cast<double>(clamped))), {probs},
                               [=](Tape& t, const Tensor& g) {
                                   if (p <= kFloor) return;
                                   t.grad_buffer(probs)[label] -= g[0] / p;
                               });
}

} // namespace ssanet
