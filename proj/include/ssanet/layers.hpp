#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ssanet/autodiff.hpp"
#include "ssanet/rng.hpp"
#include "ssanet/tensor.hpp"

namespace ssanet {

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Convolution with bias

struct ConvParams {
    Tensor kernel; // (k,k,k,Cin,Cout)
    Tensor bias;   // (Cout)

    static ConvParams zeros(std::size_t kernel, std::size_t in, std::size_t out);
    std::size_t in() const { return kernel.extent(3); }
    std::size_t out() const { return kernel.extent(4); }
};

Var conv_forward(Var x, const ConvParams& p, Padding padding = Padding::zeros);

// ---------------------------------------------------------------------------
// Dense

struct DenseParams {
    Tensor weight; // (in, out)
    Tensor bias;   // (out)

    static DenseParams zeros(std::size_t in, std::size_t out);
    std::size_t in() const { return weight.extent(0); }
    std::size_t out() const { return weight.extent(1); }
};

// activation(x^T W + b)
Var dense_forward(Var x, const DenseParams& p, Activation kind);
Tensor dense_forward(const Tensor& x, const DenseParams& p, Activation kind);

// ---------------------------------------------------------------------------
// Dropout (inverted: survivors are scaled by 1/(1-rate) at train time)

Tensor dropout_mask(const Shape& shape, double rate, SeededRng& rng);
Var dropout(Var x, double rate, Mode mode, SeededRng& rng);
Tensor dropout(const Tensor& x, double rate, Mode mode, SeededRng& rng);

// ---------------------------------------------------------------------------
// Convolutional LSTM with peephole terms
//
//   I = sigmoid(Wxi*X + Whi*H' + peep(Wci, C') + bi)
//   F = sigmoid(Wxf*X + Whf*H' + peep(Wcf, C') + bf)
//   C = F . C' + I . tanh(Wxc*X + Whc*H' + bc)
//   O = sigmoid(Wxo*X + Who*H' + peep(Wco, C') + bo)
//   H = O . tanh(C)
//
// where * is same-padded 3D convolution, . is the elementwise product and
// H', C' are the previous states.

enum class Peephole { conv, hadamard, none };

Peephole parse_peephole(std::string_view name);
std::string_view peephole_name(Peephole mode);

struct ConvLSTMParams {
    Tensor wxi, wxf, wxc, wxo; // (k,k,k,Cin,Ch)
    Tensor whi, whf, whc, who; // (k,k,k,Ch,Ch)
    Tensor wci, wcf, wco;      // conv: (k,k,k,Ch,Ch); hadamard: (Ch); none: unused
    Tensor bi, bf, bc, bo;     // (Ch)
    Peephole peephole = Peephole::conv;

    static ConvLSTMParams zeros(std::size_t in_channels, std::size_t hidden_channels, std::size_t kernel,
                                Peephole peephole = Peephole::conv);

    std::size_t input_channels() const { return wxi.extent(3); }
    std::size_t hidden_channels() const { return wxi.extent(4); }
    std::size_t kernel_size() const { return wxi.extent(0); }

    // Throws std::invalid_argument if any tensor disagrees with wxi.
    void validate() const;

    // Named references, in a fixed order, to every tensor the peephole mode uses.
    std::vector<std::pair<std::string_view, Tensor*>> tensors();
    std::vector<std::pair<std::string_view, const Tensor*>> tensors() const;
};

struct ConvLSTMState {
    Tensor hidden; // (D,H,W,Ch)
    Tensor cell;   // (D,H,W,Ch)

    static ConvLSTMState zeros(const VolumeDims& spatial, std::size_t hidden_channels);
};

struct ConvLSTMGates {
    Tensor input, forget, output;
};

// Tape-level state. `zero` marks the initial all-zero state, for which the
// state-to-state and peephole terms vanish identically and are skipped.
struct RecurrentVars {
    Var hidden;
    Var cell;
    bool zero = false;
};

struct GateVars {
    Var input, forget, output;
};

RecurrentVars zero_recurrent_state(Tape& tape, const VolumeDims& spatial, std::size_t hidden_channels);

RecurrentVars convlstm_step(Var x, const RecurrentVars& prev, const ConvLSTMParams& p, GateVars* gates = nullptr);
// Folds steps from the zero state and returns the final hidden state.
Var convlstm_sequence(std::span<const Var> sequence, const ConvLSTMParams& p);

ConvLSTMState convlstm_step(const Tensor& x, const ConvLSTMState& prev, const ConvLSTMParams& p,
                            ConvLSTMGates* gates = nullptr);
Tensor convlstm_sequence(std::span<const Tensor> sequence, const ConvLSTMParams& p);

// ---------------------------------------------------------------------------
// Weight and bias penalties

enum class PenaltyKind { l1, l2, l1l2 };

PenaltyKind parse_penalty_kind(std::string_view name);
std::string_view penalty_kind_name(PenaltyKind kind);

struct PenaltyTerm {
    PenaltyKind kind = PenaltyKind::l2;
    double l1_rate = 0.0;
    double l2_rate = 0.0;
};

struct RegularizationConfig {
    PenaltyTerm weights{PenaltyKind::l2, 0.0, 0.005};
    PenaltyTerm biases{PenaltyKind::l1l2, 0.005, 0.005};
};

// Sum over layers of rate*sum|w| (L1) and/or rate*sum w^2 (L2), for weights and biases.
double regularization_penalty(std::span<const DenseParams> layers, const RegularizationConfig& cfg);
Var regularization_penalty(Tape& tape, std::span<const DenseParams> layers, const RegularizationConfig& cfg);

} // namespace ssanet
