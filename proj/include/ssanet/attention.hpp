#pragma once

#include <cstddef>
#include <string_view>

#include "ssanet/layers.hpp"

namespace ssanet {

// How the entry-conv output is presented to the ConvLSTM as a sequence.
//   single_step:    one step holding all inner channels
//   channel_chunks: `chunks` consecutive channel groups, one per step
enum class SequenceMode { single_step, channel_chunks };

SequenceMode parse_sequence_mode(std::string_view name);
std::string_view sequence_mode_name(SequenceMode mode);

struct SSAConfig {
    std::size_t inner_channels = 64;
    std::size_t kernel = 3;
    SequenceMode sequence = SequenceMode::single_step;
    std::size_t chunks = 1;
    bool residual = false;
    Activation entry_activation = Activation::relu;
    Peephole peephole = Peephole::conv;

    std::size_t steps() const { return sequence == SequenceMode::single_step ? 1 : chunks; }
    std::size_t step_channels() const { return inner_channels / steps(); }
    void validate() const;
};

// Spatial sequence attention: entry conv -> ConvLSTM -> exit conv back to the
// input channel count.
struct SSAParams {
    ConvParams entry; // C -> inner
    ConvLSTMParams lstm; // inner/steps -> inner
    ConvParams exit; // inner -> C

    static SSAParams zeros(std::size_t channels, const SSAConfig& cfg);
    std::size_t channels() const { return entry.in(); }
};

Var ssa_forward(Var x, const SSAParams& p, const SSAConfig& cfg);
Tensor ssa_forward(const Tensor& x, const SSAParams& p, const SSAConfig& cfg);

// Squeeze-and-excitation over channels of a (D,H,W,C) map.
struct SEParams {
    DenseParams squeeze; // C -> hidden
    DenseParams excite;  // hidden -> C

    static std::size_t hidden_width(std::size_t channels, std::size_t ratio);
    static SEParams zeros(std::size_t channels, std::size_t ratio);
    std::size_t channels() const { return squeeze.in(); }
};

// s = sigmoid(W2 relu(W1 gap(X) + b1) + b2); channel c of the result is s_c * X[..., c].
Var senet_forward(Var x, const SEParams& p, Var* excitation = nullptr);
Tensor senet_forward(const Tensor& x, const SEParams& p);

// Mean |x| over channels, min-max normalized to [0,1]; a constant map becomes all zeros.
Tensor attention_map(const Tensor& attended);

} // namespace ssanet
