#include "ssanet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ssanet/io.hpp"

namespace ssanet {

AttentionKind parse_attention_kind(std::string_view name) {
    if (name == "ssa") return AttentionKind::ssa;
    if (name == "senet") return AttentionKind::senet;
    if (name == "none") return AttentionKind::none;
    throw std::invalid_argument("unknown attention kind '" + std::string(name) + "'");
}

std::string_view attention_kind_name(AttentionKind kind) {
    switch (kind) {
    case AttentionKind::ssa: return "ssa";
    case AttentionKind::senet: return "senet";
    case AttentionKind::none: return "none";
    }
    return "ssa";
}

ProviderKind parse_provider_kind(std::string_view name) {
    if (name == "precomputed") return ProviderKind::precomputed;
    if (name == "mini-stem") return ProviderKind::mini_stem;
    throw std::invalid_argument("unknown feature provider '" + std::string(name) + "'");
}

std::string_view provider_kind_name(ProviderKind kind) {
    return kind == ProviderKind::precomputed ? "precomputed" : "mini-stem";
}

std::size_t StemConfig::channels_at(std::size_t block) const {
    const std::size_t shift = blocks - 1 - block;
    return shift >= 63 ? 1 : std::max<std::size_t>(channels >> shift, 1);
}

void ModelConfig::validate() const {
    if (classes != 2) throw std::invalid_argument("model: class count must be 2, got " + std::to_string(classes));
    if (head_widths.empty()) throw std::invalid_argument("model: at least one hidden head layer is required");
    for (auto w : head_widths) {
        if (w == 0) throw std::invalid_argument("model: head widths must be >= 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model: dropout must lie in [0, 1)");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
        throw std::invalid_argument("model: init_scale must be finite and >= 0");
    }
    if (input_shape.size() != 4) {
        throw std::invalid_argument("model: input shape needs 4 axes (D,H,W,C), got " +
                                    std::to_string(input_shape.size()));
    }
    for (auto e : input_shape) {
        if (e == 0) throw std::invalid_argument("model: input extents must be >= 1");
    }
    if (provider == ProviderKind::mini_stem) {
        if (input_shape[3] != 1) throw std::invalid_argument("model: mini-stem expects a single-channel volume");
        if (stem.blocks == 0 || stem.blocks > 8) throw std::invalid_argument("model: stem blocks must be in 1..8");
        if (stem.channels == 0) throw std::invalid_argument("model: stem channels must be >= 1");
        if (stem.kernel % 2 == 0) throw std::invalid_argument("model: stem kernel size must be odd");
    }
    if (attention == AttentionKind::ssa) ssa.validate();
    if (attention == AttentionKind::senet && se_ratio == 0) throw std::invalid_argument("model: se_ratio must be >= 1");
}

Shape ModelConfig::input() const { return Shape(input_shape); }

Shape ModelConfig::feature_shape() const {
    if (provider == ProviderKind::precomputed) return input();
    const std::size_t cell = std::size_t{1} << stem.blocks;
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < 3; ++a) {
        if (input_shape[a] < cell) {
            throw std::invalid_argument("input -> provider: volume " + input().str() + " is smaller than 2^" +
                                        std::to_string(stem.blocks) + " = " + std::to_string(cell) +
                                        " along axis " + std::to_string(a));
        }
        out.push_back((input_shape[a] + cell - 1) / cell);
    }
    out.push_back(stem.channels);
    return Shape(std::move(out));
}

Var mini_stem_forward(Var volume, const MiniStemParams& p) {
    const VolumeDims dims = volume_dims(volume.value(), "mini_stem_forward");
    if (dims.channels != 1) throw std::invalid_argument("mini_stem_forward: expects one channel, got " + volume.shape().str());
    if (p.blocks.empty()) throw std::invalid_argument("mini_stem_forward: no blocks");
    const std::size_t cell = std::size_t{1} << p.blocks.size();
    if (dims.depth < cell || dims.height < cell || dims.width < cell) {
        throw std::invalid_argument("mini_stem_forward: volume " + volume.shape().str() + " is smaller than " +
                                    std::to_string(cell) + " per axis");
    }
    Var x = volume;
    for (const auto& block : p.blocks) {
        x = downsample2(activation(conv_forward(x, block, Padding::replicate), Activation::relu));
    }
    return x;
}

Tensor mini_stem_forward(const Tensor& volume, const MiniStemParams& p) {
    Tape tape(false);
    return mini_stem_forward(tape.constant(volume), p).value();
}

std::vector<NamedParam> Model::parameters() {
    std::vector<NamedParam> out;
    for (std::size_t b = 0; b < stem.blocks.size(); ++b) {
        const std::string prefix = "stem." + std::to_string(b) + ".";
        out.push_back({prefix + "kernel", &stem.blocks[b].kernel});
        out.push_back({prefix + "bias", &stem.blocks[b].bias});
    }
    if (config.attention == AttentionKind::ssa) {
        out.push_back({"ssa.entry.kernel", &ssa.entry.kernel});
        out.push_back({"ssa.entry.bias", &ssa.entry.bias});
        for (auto [name, t] : ssa.lstm.tensors()) out.push_back({"ssa.lstm." + std::string(name), t});
        out.push_back({"ssa.exit.kernel", &ssa.exit.kernel});
        out.push_back({"ssa.exit.bias", &ssa.exit.bias});
    } else if (config.attention == AttentionKind::senet) {
        out.push_back({"se.squeeze.weight", &se.squeeze.weight});
        out.push_back({"se.squeeze.bias", &se.squeeze.bias});
        out.push_back({"se.excite.weight", &se.excite.weight});
        out.push_back({"se.excite.bias", &se.excite.bias});
    }
    for (std::size_t l = 0; l < head.size(); ++l) {
        const std::string prefix = "head." + std::to_string(l) + ".";
        out.push_back({prefix + "weight", &head[l].weight});
        out.push_back({prefix + "bias", &head[l].bias});
    }
    return out;
}

std::vector<ConstNamedParam> Model::parameters() const {
    std::vector<ConstNamedParam> out;
    for (auto& p : const_cast<Model*>(this)->parameters()) out.push_back({std::move(p.name), p.tensor});
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor->size();
    return n;
}

Model allocate_model(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.config = cfg;
    const Shape features = cfg.feature_shape();
    if (cfg.provider == ProviderKind::mini_stem) {
        std::size_t in = 1;
        for (std::size_t b = 0; b < cfg.stem.blocks; ++b) {
            const std::size_t out = cfg.stem.channels_at(b);
            m.stem.blocks.push_back(ConvParams::zeros(cfg.stem.kernel, in, out));
            in = out;
        }
    }
    const std::size_t channels = features[3];
    if (cfg.attention == AttentionKind::ssa) m.ssa = SSAParams::zeros(channels, cfg.ssa);
    if (cfg.attention == AttentionKind::senet) m.se = SEParams::zeros(channels, cfg.se_ratio);
    std::size_t in = channels;
    for (auto w : cfg.head_widths) {
        m.head.push_back(DenseParams::zeros(in, w));
        in = w;
    }
    m.head.push_back(DenseParams::zeros(in, cfg.classes));
    return m;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <class F>
Var stage(const char* boundary, F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string(boundary) + ": " + e.what());
    }
}

} // namespace

Model build_model(const ModelConfig& cfg, SeededRng& rng) {
    Model m = allocate_model(cfg);
    for (auto& [name, t] : m.parameters()) {
        if (t->rank() < 2) {
            // Biases and per-channel peephole weights.
            t->fill(ends_with(name, "lstm.b_f") ? real(1) : real(0));
            continue;
        }
        const std::size_t fan_in = t->size() / t->extent(t->rank() - 1);
        const double bound = std::sqrt(3.0 / static_cast<double>(fan_in)) * cfg.init_scale;
        for (auto& v : t->data()) v = static_cast<real>(rng.uniform(-bound, bound));
    }
    Tape tape(false);
    SeededRng unused(0);
    const Var probs = model_forward(tape.constant(Tensor(cfg.input())), m, Mode::infer, unused);
    if (probs.shape() != Shape{cfg.classes}) throw std::logic_error("build_model: dry run produced " + probs.shape().str());
    return m;
}

Var model_forward(Var input, const Model& m, Mode mode, SeededRng& rng, ForwardTrace* trace) {
    const ModelConfig& cfg = m.config;
    if (input.shape() != cfg.input()) {
        throw std::invalid_argument("model_forward: input " + input.shape().str() + " does not match the configured " +
                                    cfg.input().str());
    }
    const Var features = stage("input -> provider", [&] {
        return cfg.provider == ProviderKind::mini_stem ? mini_stem_forward(input, m.stem) : input;
    });
    const Var attended = stage("provider -> attention", [&] {
        switch (cfg.attention) {
        case AttentionKind::ssa: return ssa_forward(features, m.ssa, cfg.ssa);
        case AttentionKind::senet: return senet_forward(features, m.se);
        case AttentionKind::none: break;
        }
        return features;
    });
    Var h = stage("attention -> pooling", [&] { return global_avg_pool(attended); });
    const Var logits = stage("pooling -> head", [&] {
        for (std::size_t l = 0; l + 1 < m.head.size(); ++l) {
            h = dropout(dense_forward(h, m.head[l], Activation::gelu), cfg.dropout, mode, rng);
        }
        return dense_forward(h, m.head.back(), Activation::linear);
    });
    if (trace) *trace = {features, attended, logits};
    return softmax(logits);
}

Tensor model_forward(const Model& m, const Tensor& input, Mode mode, SeededRng& rng) {
    Tape tape(false);
    return model_forward(tape.constant(input), m, mode, rng).value();
}

Tensor model_predict(const Model& m, const Tensor& input) {
    SeededRng unused(0);
    return model_forward(m, input, Mode::infer, unused);
}

Tensor attended_features(const Model& m, const Tensor& input) {
    Tape tape(false);
    SeededRng unused(0);
    ForwardTrace trace;
    model_forward(tape.constant(input), m, Mode::infer, unused, &trace);
    return trace.attended.value();
}

Tensor load_features(const std::filesystem::path& path) {
    Tensor t = vtf_read(path);
    if (t.rank() != 4) {
        throw FormatError(path.string() + ": expected a 4-axis (D,H,W,C) tensor, found shape " + t.shape().str());
    }
    return t;
}

} // namespace ssanet
