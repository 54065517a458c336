#include "ssanet/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <functional>
#include <type_traits>

#include "ssanet/io.hpp"

namespace ssanet {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "': " + what);
}

std::size_t as_size(const std::string& key, const json& v) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        bad(key, "expected a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::uint64_t as_u64(const std::string& key, const json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        bad(key, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

double as_double(const std::string& key, const json& v) {
    if (!v.is_number()) bad(key, "expected a number");
    return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) bad(key, "expected true or false");
    return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
    if (!v.is_string()) bad(key, "expected a string");
    return v.get<std::string>();
}

std::vector<std::size_t> as_sizes(const std::string& key, const json& v) {
    if (!v.is_array()) bad(key, "expected an array of integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) out.push_back(as_size(key, e));
    return out;
}

template <class T, std::size_t N>
std::array<T, N> as_array(const std::string& key, const json& v) {
    if (!v.is_array() || v.size() != N) bad(key, "expected an array of " + std::to_string(N) + " numbers");
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        if constexpr (std::is_same_v<T, double>) {
            out[i] = as_double(key, v[i]);
        } else {
            out[i] = as_size(key, v[i]);
        }
    }
    return out;
}

// Wraps enum parsers so their errors name the key.
template <class F>
auto parsed(const std::string& key, const json& v, F&& parse) {
    const std::string s = as_string(key, v);
    try {
        return parse(s);
    } catch (const std::invalid_argument& e) {
        bad(key, e.what());
    }
}

struct Field {
    std::string key;
    std::function<json(const RunConfig&)> emit;
    std::function<void(RunConfig&, const std::string&, const json&)> parse;
};

#define SIZE_FIELD(name, member) \
    Field{name, [](const RunConfig& c) { return json(c.member); }, \
          [](RunConfig& c, const std::string& k, const json& v) { c.member = as_size(k, v); }}
#define DOUBLE_FIELD(name, member) \
    Field{name, [](const RunConfig& c) { return json(c.member); }, \
          [](RunConfig& c, const std::string& k, const json& v) { c.member = as_double(k, v); }}
#define BOOL_FIELD(name, member) \
    Field{name, [](const RunConfig& c) { return json(c.member); }, \
          [](RunConfig& c, const std::string& k, const json& v) { c.member = as_bool(k, v); }}
#define ENUM_FIELD(name, member, to_name, from_name) \
    Field{name, [](const RunConfig& c) { return json(std::string(to_name(c.member))); }, \
          [](RunConfig& c, const std::string& k, const json& v) { c.member = parsed(k, v, from_name); }}
#define ARRAY_FIELD(name, member, T, N) \
    Field{name, [](const RunConfig& c) { return json(c.member); }, \
          [](RunConfig& c, const std::string& k, const json& v) { c.member = as_array<T, N>(k, v); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        Field{"seed", [](const RunConfig& c) { return json(c.seed); },
              [](RunConfig& c, const std::string& k, const json& v) { c.seed = as_u64(k, v); }},
        SIZE_FIELD("workers", train.workers),

        ENUM_FIELD("attention", model.attention, attention_kind_name, parse_attention_kind),
        ENUM_FIELD("provider", model.provider, provider_kind_name, parse_provider_kind),
        Field{"input_shape", [](const RunConfig& c) { return json(c.model.input_shape); },
              [](RunConfig& c, const std::string& k, const json& v) { c.model.input_shape = as_sizes(k, v); }},
        SIZE_FIELD("stem_blocks", model.stem.blocks),
        SIZE_FIELD("stem_channels", model.stem.channels),
        SIZE_FIELD("stem_kernel", model.stem.kernel),
        SIZE_FIELD("ssa_inner_channels", model.ssa.inner_channels),
        SIZE_FIELD("ssa_kernel", model.ssa.kernel),
        ENUM_FIELD("ssa_sequence", model.ssa.sequence, sequence_mode_name, parse_sequence_mode),
        SIZE_FIELD("ssa_chunks", model.ssa.chunks),
        BOOL_FIELD("ssa_residual", model.ssa.residual),
        ENUM_FIELD("ssa_entry_activation", model.ssa.entry_activation, activation_name, parse_activation),
        ENUM_FIELD("ssa_peephole", model.ssa.peephole, peephole_name, parse_peephole),
        SIZE_FIELD("se_ratio", model.se_ratio),
        Field{"head_widths", [](const RunConfig& c) { return json(c.model.head_widths); },
              [](RunConfig& c, const std::string& k, const json& v) { c.model.head_widths = as_sizes(k, v); }},
        DOUBLE_FIELD("dropout", model.dropout),
        ENUM_FIELD("weight_penalty", model.regularization.weights.kind, penalty_kind_name, parse_penalty_kind),
        DOUBLE_FIELD("weight_l1", model.regularization.weights.l1_rate),
        DOUBLE_FIELD("weight_l2", model.regularization.weights.l2_rate),
        ENUM_FIELD("bias_penalty", model.regularization.biases.kind, penalty_kind_name, parse_penalty_kind),
        DOUBLE_FIELD("bias_l1", model.regularization.biases.l1_rate),
        DOUBLE_FIELD("bias_l2", model.regularization.biases.l2_rate),
        SIZE_FIELD("classes", model.classes),
        DOUBLE_FIELD("init_scale", model.init_scale),

        DOUBLE_FIELD("learning_rate", train.optimizer.learning_rate),
        DOUBLE_FIELD("beta1", train.optimizer.beta1),
        DOUBLE_FIELD("beta2", train.optimizer.beta2),
        DOUBLE_FIELD("adam_epsilon", train.optimizer.epsilon),
        BOOL_FIELD("gradient_centralization", train.optimizer.centralize),
        SIZE_FIELD("batch_size", train.batch_size),
        SIZE_FIELD("epochs", train.epochs),
        DOUBLE_FIELD("val_fraction", val_fraction),

        SIZE_FIELD("folds", cv.folds),
        ENUM_FIELD("averaging", cv.averaging, averaging_name, parse_averaging),

        SIZE_FIELD("synth_per_class", synth.per_class),
        ARRAY_FIELD("synth_shape", synth.shape, std::size_t, 3),
        DOUBLE_FIELD("synth_base_intensity", synth.base_intensity),
        DOUBLE_FIELD("synth_roi_elevation", synth.roi_elevation),
        DOUBLE_FIELD("synth_delta", synth.delta),
        DOUBLE_FIELD("synth_noise_std", synth.noise_std),
        ARRAY_FIELD("synth_roi_a_center", synth.roi_a_center, double, 3),
        ARRAY_FIELD("synth_roi_b_center", synth.roi_b_center, double, 3),
        ARRAY_FIELD("synth_roi_radii", synth.roi_radii, double, 3),
    };
    return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef ENUM_FIELD
#undef ARRAY_FIELD

} // namespace

void RunConfig::validate() const {
    try {
        model.validate();
        synth.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (train.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (train.workers == 0) throw ConfigError("workers must be >= 1");
    if (!(train.optimizer.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(train.optimizer.beta1 >= 0.0 && train.optimizer.beta1 < 1.0) ||
        !(train.optimizer.beta2 >= 0.0 && train.optimizer.beta2 < 1.0)) {
        throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (!(train.optimizer.epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
    if (cv.folds < 2) throw ConfigError("folds must be >= 2");
    for (const auto* term : {&model.regularization.weights, &model.regularization.biases}) {
        if (!(term->l1_rate >= 0.0) || !(term->l2_rate >= 0.0)) throw ConfigError("penalty rates must be >= 0");
    }
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    synth.seed = s;
    model.seed = s;
}

std::string config_to_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& f : fields()) j[f.key] = f.emit(cfg);
    return j.dump(2) + "\n";
}

RunConfig config_from_json(std::string_view text) {
    RunConfig cfg;
    const std::string body(text);
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) return cfg;
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        const auto& table = fields();
        auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
        if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
        try {
            it->parse(cfg, key, value);
        } catch (const json::exception& e) {
            bad(key, e.what());
        }
    }
    cfg.set_seed(cfg.seed);
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    try {
        return config_from_json(read_text_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
}

void save_model(const std::filesystem::path& dir, const Model& model, const RunConfig& cfg) {
    std::filesystem::create_directories(dir / "params");
    for (const auto& p : model.parameters()) vtf_write(dir / "params" / (p.name + ".vtf"), *p.tensor);
    RunConfig stored = cfg;
    stored.model = model.config;
    write_file_atomic(dir / "config.json", config_to_json(stored));
}

LoadedModel load_model(const std::filesystem::path& dir) {
    LoadedModel out{load_config(dir / "config.json"), Model{}};
    out.model = allocate_model(out.config.model);
    for (auto& p : out.model.parameters()) {
        Tensor t = vtf_read(dir / "params" / (p.name + ".vtf"));
        if (t.shape() != p.tensor->shape()) {
            throw FormatError(dir.string() + ": parameter " + p.name + " has shape " + t.shape().str() +
                              ", expected " + p.tensor->shape().str());
        }
        *p.tensor = std::move(t);
    }
    return out;
}

} // namespace ssanet
