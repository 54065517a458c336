#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ssanet/attention.hpp"
#include "ssanet/layers.hpp"

namespace ssanet {

enum class AttentionKind { ssa, senet, none };
enum class ProviderKind { precomputed, mini_stem };

AttentionKind parse_attention_kind(std::string_view name);
std::string_view attention_kind_name(AttentionKind kind);
ProviderKind parse_provider_kind(std::string_view name);
std::string_view provider_kind_name(ProviderKind kind);

// Trainable stand-in for a pretrained feature extractor: `blocks` rounds of
// conv(k, replicate padding) + relu + 2x2x2 mean downsampling. Channel counts
// double per block and end at `channels`.
struct StemConfig {
    std::size_t blocks = 3;
    std::size_t channels = 32;
    std::size_t kernel = 3;

    std::size_t channels_at(std::size_t block) const;
};

struct ModelConfig {
    AttentionKind attention = AttentionKind::ssa;
    SSAConfig ssa;
    std::size_t se_ratio = 16;
    std::vector<std::size_t> head_widths{512, 256};
    double dropout = 0.5;
    RegularizationConfig regularization;
    std::size_t classes = 2;
    ProviderKind provider = ProviderKind::precomputed;
    // precomputed: feature map (D,H,W,C); mini-stem: volume (D,H,W,1)
    std::vector<std::size_t> input_shape{7, 9, 7, 1024};
    StemConfig stem;
    // Multiplies every weight init bound; 0 yields all-zero weights.
    double init_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    Shape input() const;
    Shape feature_shape() const; // provider output
};

struct MiniStemParams {
    std::vector<ConvParams> blocks;
};

Var mini_stem_forward(Var volume, const MiniStemParams& p);
Tensor mini_stem_forward(const Tensor& volume, const MiniStemParams& p);

struct NamedParam {
    std::string name;
    Tensor* tensor;
};

struct ConstNamedParam {
    std::string name;
    const Tensor* tensor;
};

struct Model {
    ModelConfig config;
    MiniStemParams stem;
    SSAParams ssa;
    SEParams se;
    std::vector<DenseParams> head;

    // Every trainable tensor under a stable dotted name, in a fixed order.
    std::vector<NamedParam> parameters();
    std::vector<ConstNamedParam> parameters() const;
    std::size_t parameter_count() const;
};

// Allocates, initializes (fan-in scaled uniform weights, zero biases, forget
// bias 1) and dry-runs the model on a zero input.
Model build_model(const ModelConfig& cfg, SeededRng& rng);
// Same layout with every parameter zero and no dry run.
Model allocate_model(const ModelConfig& cfg);

struct ForwardTrace {
    Var features; // provider output
    Var attended; // attention output (equals features when attention is none)
    Var logits;
};

Var model_forward(Var input, const Model& m, Mode mode, SeededRng& rng, ForwardTrace* trace = nullptr);
Tensor model_forward(const Model& m, const Tensor& input, Mode mode, SeededRng& rng);
Tensor model_predict(const Model& m, const Tensor& input); // infer mode
Tensor attended_features(const Model& m, const Tensor& input);

// Reads a rank-4 (D,H,W,C) VTF tensor.
Tensor load_features(const std::filesystem::path& path);

} // namespace ssanet
