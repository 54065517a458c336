#include "ssanet/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssanet {

SequenceMode parse_sequence_mode(std::string_view name) {
    if (name == "single-step") return SequenceMode::single_step;
    if (name == "channel-chunks") return SequenceMode::channel_chunks;
    throw std::invalid_argument("unknown sequence mode '" + std::string(name) + "'");
}

std::string_view sequence_mode_name(SequenceMode mode) {
    return mode == SequenceMode::single_step ? "single-step" : "channel-chunks";
}

void SSAConfig::validate() const {
    if (inner_channels == 0) throw std::invalid_argument("ssa: inner channel count must be >= 1");
    if (kernel % 2 == 0) throw std::invalid_argument("ssa: kernel size must be odd");
    if (sequence == SequenceMode::channel_chunks && (chunks == 0 || inner_channels % chunks != 0)) {
        throw std::invalid_argument("ssa: " + std::to_string(chunks) + " chunks do not divide " +
                                    std::to_string(inner_channels) + " inner channels");
    }
}

SSAParams SSAParams::zeros(std::size_t channels, const SSAConfig& cfg) {
    cfg.validate();
    return {ConvParams::zeros(cfg.kernel, channels, cfg.inner_channels),
            ConvLSTMParams::zeros(cfg.step_channels(), cfg.inner_channels, cfg.kernel, cfg.peephole),
            ConvParams::zeros(cfg.kernel, cfg.inner_channels, channels)};
}

Var ssa_forward(Var x, const SSAParams& p, const SSAConfig& cfg) {
    cfg.validate();
    const VolumeDims dims = volume_dims(x.value(), "ssa_forward");
    if (dims.channels != p.channels()) {
        throw std::invalid_argument("ssa_forward: input " + x.shape().str() + " does not match a block built for " +
                                    std::to_string(p.channels()) + " channels");
    }
    const Var inner = activation(conv_forward(x, p.entry), cfg.entry_activation);
    std::vector<Var> sequence;
    const std::size_t width = cfg.step_channels();
    for (std::size_t t = 0; t < cfg.steps(); ++t) {
        sequence.push_back(cfg.steps() == 1 ? inner : slice_channels(inner, t * width, width));
    }
    const Var hidden = convlstm_sequence(sequence, p.lstm);
    const Var out = conv_forward(hidden, p.exit);
    return cfg.residual ? out + x : out;
}

Tensor ssa_forward(const Tensor& x, const SSAParams& p, const SSAConfig& cfg) {
    Tape tape(false);
    return ssa_forward(tape.constant(x), p, cfg).value();
}

std::size_t SEParams::hidden_width(std::size_t channels, std::size_t ratio) {
    if (ratio == 0) throw std::invalid_argument("senet: reduction ratio must be >= 1");
    return std::max<std::size_t>(channels / ratio, 4);
}

SEParams SEParams::zeros(std::size_t channels, std::size_t ratio) {
    const std::size_t hidden = hidden_width(channels, ratio);
    return {DenseParams::zeros(channels, hidden), DenseParams::zeros(hidden, channels)};
}

Var senet_forward(Var x, const SEParams& p, Var* excitation) {
    const VolumeDims dims = volume_dims(x.value(), "senet_forward");
    if (dims.channels != p.channels() || p.excite.out() != p.channels()) {
        throw std::invalid_argument("senet_forward: input " + x.shape().str() + " does not match a block built for " +
                                    std::to_string(p.channels()) + " channels");
    }
    const Var pooled = global_avg_pool(x);
    const Var s = dense_forward(dense_forward(pooled, p.squeeze, Activation::relu), p.excite, Activation::sigmoid);
    if (excitation) *excitation = s;
    return scale_channels(x, s);
}

Tensor senet_forward(const Tensor& x, const SEParams& p) {
    Tape tape(false);
    return senet_forward(tape.constant(x), p).value();
}

Tensor attention_map(const Tensor& attended) {
    const VolumeDims dims = volume_dims(attended, "attention_map");
    Tensor map(Shape{dims.depth, dims.height, dims.width});
    const real* p = attended.data().data();
    for (std::size_t v = 0; v < dims.voxels(); ++v, p += dims.channels) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dims.channels; ++c) acc += std::fabs(p[c]);
        map[v] = static_cast<real>(acc / static_cast<double>(dims.channels));
    }
    const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
    const real low = *lo;
    const real range = *hi - *lo;
    for (auto& v : map.data()) v = range > 0.0f ? (v - low) / range : 0.0f;
    return map;
}

} // namespace ssanet
