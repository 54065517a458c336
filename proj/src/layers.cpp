#include "ssanet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ssanet {

DenseParams DenseParams::zeros(std::size_t in, std::size_t out) {
    return {Tensor(Shape{in, out}), Tensor(Shape{out})};
}

ConvParams ConvParams::zeros(std::size_t kernel, std::size_t in, std::size_t out) {
    return {Tensor(Shape{kernel, kernel, kernel, in, out}), Tensor(Shape{out})};
}

Var conv_forward(Var x, const ConvParams& p, Padding padding) {
    Tape& tape = x.tape();
    return conv3d(x, tape.param(p.kernel), tape.param(p.bias), padding);
}

Var dense_forward(Var x, const DenseParams& p, Activation kind) {
    Tape& tape = x.tape();
    return activation(matvec(x, tape.param(p.weight), tape.param(p.bias)), kind);
}

Tensor dense_forward(const Tensor& x, const DenseParams& p, Activation kind) {
    Tape tape(false);
    return dense_forward(tape.constant(x), p, kind).value();
}

namespace {

void check_dropout_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
    }
}

} // namespace

Tensor dropout_mask(const Shape& shape, double rate, SeededRng& rng) {
    check_dropout_rate(rate);
    Tensor mask(shape, 1.0f);
    if (rate == 0.0) return mask;
    const real keep_scale = static_cast<real>(1.0 / (1.0 - rate));
    for (auto& m : mask.data()) m = rng.bernoulli(rate) ? 0.0f : keep_scale;
    return mask;
}

Var dropout(Var x, double rate, Mode mode, SeededRng& rng) {
    check_dropout_rate(rate);
    if (mode == Mode::infer || rate == 0.0) return x;
    return x * x.tape().constant(dropout_mask(x.shape(), rate, rng));
}

Tensor dropout(const Tensor& x, double rate, Mode mode, SeededRng& rng) {
    Tape tape(false);
    return dropout(tape.constant(x), rate, mode, rng).value();
}

Peephole parse_peephole(std::string_view name) {
    if (name == "conv") return Peephole::conv;
    if (name == "hadamard") return Peephole::hadamard;
    if (name == "none") return Peephole::none;
    throw std::invalid_argument("unknown peephole mode '" + std::string(name) + "'");
}

std::string_view peephole_name(Peephole mode) {
    switch (mode) {
    case Peephole::conv: return "conv";
    case Peephole::hadamard: return "hadamard";
    case Peephole::none: return "none";
    }
    return "conv";
}

ConvLSTMParams ConvLSTMParams::zeros(std::size_t in_channels, std::size_t hidden_channels, std::size_t kernel,
                                     Peephole peephole) {
    const Shape input_kernel{kernel, kernel, kernel, in_channels, hidden_channels};
    const Shape state_kernel{kernel, kernel, kernel, hidden_channels, hidden_channels};
    const Shape bias{hidden_channels};
    ConvLSTMParams p;
    p.wxi = p.wxf = p.wxc = p.wxo = Tensor(input_kernel);
    p.whi = p.whf = p.whc = p.who = Tensor(state_kernel);
    if (peephole == Peephole::conv) p.wci = p.wcf = p.wco = Tensor(state_kernel);
    if (peephole == Peephole::hadamard) p.wci = p.wcf = p.wco = Tensor(bias);
    p.bi = p.bf = p.bc = p.bo = Tensor(bias);
    p.peephole = peephole;
    p.validate();
    return p;
}

void ConvLSTMParams::validate() const {
    if (wxi.rank() != 5 || wxi.extent(0) % 2 == 0) {
        throw std::invalid_argument("ConvLSTM: input kernel must be (k,k,k,Cin,Ch) with odd k, got " +
                                    wxi.shape().str());
    }
    const std::size_t k = kernel_size();
    const std::size_t ch = hidden_channels();
    const Shape input_kernel{k, k, k, input_channels(), ch};
    const Shape state_kernel{k, k, k, ch, ch};
    const Shape bias{ch};
    auto expect = [](const Tensor& t, const Shape& s, const char* name) {
        if (t.shape() != s) {
            throw std::invalid_argument(std::string("ConvLSTM: ") + name + " has shape " + t.shape().str() +
                                        ", expected " + s.str());
        }
    };
    expect(wxf, input_kernel, "W_xf");
    expect(wxc, input_kernel, "W_xc");
    expect(wxo, input_kernel, "W_xo");
    expect(whi, state_kernel, "W_hi");
    expect(whf, state_kernel, "W_hf");
    expect(whc, state_kernel, "W_hc");
    expect(who, state_kernel, "W_ho");
    if (peephole != Peephole::none) {
        const Shape& peep = peephole == Peephole::conv ? state_kernel : bias;
        expect(wci, peep, "W_ci");
        expect(wcf, peep, "W_cf");
        expect(wco, peep, "W_co");
    }
    expect(bi, bias, "b_i");
    expect(bf, bias, "b_f");
    expect(bc, bias, "b_c");
    expect(bo, bias, "b_o");
}

std::vector<std::pair<std::string_view, Tensor*>> ConvLSTMParams::tensors() {
    std::vector<std::pair<std::string_view, Tensor*>> out{
        {"w_xi", &wxi}, {"w_xf", &wxf}, {"w_xc", &wxc}, {"w_xo", &wxo},
        {"w_hi", &whi}, {"w_hf", &whf}, {"w_hc", &whc}, {"w_ho", &who},
    };
    if (peephole != Peephole::none) {
        out.insert(out.end(), {{"w_ci", &wci}, {"w_cf", &wcf}, {"w_co", &wco}});
    }
    out.insert(out.end(), {{"b_i", &bi}, {"b_f", &bf}, {"b_c", &bc}, {"b_o", &bo}});
    return out;
}

std::vector<std::pair<std::string_view, const Tensor*>> ConvLSTMParams::tensors() const {
    std::vector<std::pair<std::string_view, const Tensor*>> out;
    for (auto [name, t] : const_cast<ConvLSTMParams*>(this)->tensors()) out.emplace_back(name, t);
    return out;
}

ConvLSTMState ConvLSTMState::zeros(const VolumeDims& spatial, std::size_t hidden_channels) {
    const Shape s{spatial.depth, spatial.height, spatial.width, hidden_channels};
    return {Tensor(s), Tensor(s)};
}

RecurrentVars zero_recurrent_state(Tape& tape, const VolumeDims& spatial, std::size_t hidden_channels) {
    const ConvLSTMState zero = ConvLSTMState::zeros(spatial, hidden_channels);
    return {tape.constant(zero.hidden), tape.constant(zero.cell), true};
}

namespace {

Var peephole_term(Var cell, const Tensor& weight, Peephole mode) {
    Tape& tape = cell.tape();
    if (mode == Peephole::conv) return conv3d(cell, tape.param(weight));
    return scale_channels(cell, tape.param(weight));
}

// Pre-activation of one gate: Wx*X + b [+ Wh*H'] [+ peep(Wc, C')].
Var gate_input(Var x, const RecurrentVars& prev, const Tensor& wx, const Tensor& wh, const Tensor* wc,
               const Tensor& b, Peephole mode) {
    Tape& tape = x.tape();
    Var acc = conv3d(x, tape.param(wx), tape.param(b));
    if (prev.zero) return acc;
    acc = acc + conv3d(prev.hidden, tape.param(wh));
    if (wc && mode != Peephole::none) acc = acc + peephole_term(prev.cell, *wc, mode);
    return acc;
}

void check_step_shapes(const Shape& x, const Shape& hidden, const ConvLSTMParams& p) {
    if (x.rank() != 4 || x[3] != p.input_channels()) {
        throw std::invalid_argument("convlstm_step: input " + x.str() + " does not match " +
                                    std::to_string(p.input_channels()) + " input channels");
    }
    if (hidden.rank() != 4 || hidden[0] != x[0] || hidden[1] != x[1] || hidden[2] != x[2] ||
        hidden[3] != p.hidden_channels()) {
        throw std::invalid_argument("convlstm_step: state " + hidden.str() + " incompatible with input " + x.str());
    }
}

} // namespace

RecurrentVars convlstm_step(Var x, const RecurrentVars& prev, const ConvLSTMParams& p, GateVars* gates) {
    p.validate();
    check_step_shapes(x.shape(), prev.hidden.shape(), p);
    if (prev.cell.shape() != prev.hidden.shape()) {
        throw std::invalid_argument("convlstm_step: hidden " + prev.hidden.shape().str() + " and cell " +
                                    prev.cell.shape().str() + " differ");
    }
    const Peephole mode = p.peephole;
    const Var i = sigmoid(gate_input(x, prev, p.wxi, p.whi, &p.wci, p.bi, mode));
    const Var f = sigmoid(gate_input(x, prev, p.wxf, p.whf, &p.wcf, p.bf, mode));
    const Var candidate = tanh(gate_input(x, prev, p.wxc, p.whc, nullptr, p.bc, mode));
    const Var o = sigmoid(gate_input(x, prev, p.wxo, p.who, &p.wco, p.bo, mode));
    const Var cell = prev.zero ? i * candidate : f * prev.cell + i * candidate;
    const Var hidden = o * tanh(cell);
    if (gates) *gates = {i, f, o};
    return {hidden, cell, false};
}

Var convlstm_sequence(std::span<const Var> sequence, const ConvLSTMParams& p) {
    if (sequence.empty()) throw std::invalid_argument("convlstm_sequence: empty sequence");
    const Shape& first = sequence.front().shape();
    for (const Var& step : sequence) {
        if (step.shape() != first) {
            throw std::invalid_argument("convlstm_sequence: step shape " + step.shape().str() + " differs from " +
                                        first.str());
        }
    }
    RecurrentVars state = zero_recurrent_state(sequence.front().tape(), volume_dims(sequence.front().value(),
                                                                                   "convlstm_sequence"),
                                               p.hidden_channels());
    for (const Var& step : sequence) state = convlstm_step(step, state, p);
    return state.hidden;
}

ConvLSTMState convlstm_step(const Tensor& x, const ConvLSTMState& prev, const ConvLSTMParams& p,
                            ConvLSTMGates* gates) {
    Tape tape(false);
    auto is_zero = [](const Tensor& t) {
        return std::all_of(t.data().begin(), t.data().end(), [](real v) { return v == 0.0f; });
    };
    const RecurrentVars state{tape.constant(prev.hidden), tape.constant(prev.cell),
                              is_zero(prev.hidden) && is_zero(prev.cell)};
    GateVars g;
    const RecurrentVars next = convlstm_step(tape.constant(x), state, p, &g);
    if (gates) *gates = {g.input.value(), g.forget.value(), g.output.value()};
    return {next.hidden.value(), next.cell.value()};
}

Tensor convlstm_sequence(std::span<const Tensor> sequence, const ConvLSTMParams& p) {
    Tape tape(false);
    std::vector<Var> steps;
    steps.reserve(sequence.size());
    for (const Tensor& t : sequence) steps.push_back(tape.constant(t));
    return convlstm_sequence(steps, p).value();
}

PenaltyKind parse_penalty_kind(std::string_view name) {
    if (name == "l1") return PenaltyKind::l1;
    if (name == "l2") return PenaltyKind::l2;
    if (name == "l1l2") return PenaltyKind::l1l2;
    throw std::invalid_argument("unknown penalty kind '" + std::string(name) + "'");
}

std::string_view penalty_kind_name(PenaltyKind kind) {
    switch (kind) {
    case PenaltyKind::l1: return "l1";
    case PenaltyKind::l2: return "l2";
    case PenaltyKind::l1l2: return "l1l2";
    }
    return "l2";
}

namespace {

bool uses_l1(const PenaltyTerm& t) { return t.kind != PenaltyKind::l2 && t.l1_rate != 0.0; }
bool uses_l2(const PenaltyTerm& t) { return t.kind != PenaltyKind::l1 && t.l2_rate != 0.0; }

void check_rates(const PenaltyTerm& t) {
    if (t.l1_rate < 0.0 || t.l2_rate < 0.0) throw std::invalid_argument("regularization rates must be >= 0");
}

} // namespace

double regularization_penalty(std::span<const DenseParams> layers, const RegularizationConfig& cfg) {
    check_rates(cfg.weights);
    check_rates(cfg.biases);
    double total = 0.0;
    auto add = [&total](const Tensor& t, const PenaltyTerm& term) {
        double l1 = 0.0;
        double l2 = 0.0;
        for (real v : t.data()) {
            l1 += std::fabs(static_cast<double>(v));
            l2 += static_cast<double>(v) * v;
        }
        if (uses_l1(term)) total += term.l1_rate * l1;
        if (uses_l2(term)) total += term.l2_rate * l2;
    };
    for (const DenseParams& layer : layers) {
        add(layer.weight, cfg.weights);
        add(layer.bias, cfg.biases);
    }
    return total;
}

Var regularization_penalty(Tape& tape, std::span<const DenseParams> layers, const RegularizationConfig& cfg) {
    check_rates(cfg.weights);
    check_rates(cfg.biases);
    Var total = tape.constant(Tensor::scalar(0.0f));
    auto add = [&](const Tensor& t, const PenaltyTerm& term) {
        if (uses_l1(term)) total = total + scale(abs_sum(tape.param(t)), static_cast<real>(term.l1_rate));
        if (uses_l2(term)) total = total + scale(square_sum(tape.param(t)), static_cast<real>(term.l2_rate));
    };
    for (const DenseParams& layer : layers) {
        add(layer.weight, cfg.weights);
        add(layer.bias, cfg.biases);
    }
    return total;
}

} // namespace ssanet
