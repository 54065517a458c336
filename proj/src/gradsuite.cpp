#include "ssanet/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace ssanet {

GradCheckOptions default_gradcheck_options() {
    GradCheckOptions o;
    if constexpr (std::is_same_v<real, double>) {
        // Round-off grows as 1/eps and only 1e-4 keeps it well under 1e-6 on
        // the tiny gradients of early stem layers. A step that wide straddles
        // stem relus now and then, hence the guard.
        o.epsilon = 1e-4;
        o.tolerance = 1e-6;
        o.kink_guard = true;
    } else {
        o.epsilon = 1e-3;
        o.tolerance = 1e-3;
    }
    return o;
}

ModelConfig miniature_model_config() {
    ModelConfig cfg;
    cfg.provider = ProviderKind::mini_stem;
    cfg.input_shape = {8, 8, 8, 1};
    cfg.stem.blocks = 2;
    cfg.stem.channels = 4;
    cfg.attention = AttentionKind::ssa;
    cfg.ssa.inner_channels = 4;
    cfg.head_widths = {8, 4};
    return cfg;
}

namespace {

void fill_uniform(Tensor& t, SeededRng& rng, double bound) {
    for (auto& v : t.data()) v = static_cast<real>(rng.uniform(-bound, bound));
}

// Keeps values at least `gap` away from zero so relu kinks are not straddled.
void fill_off_zero(Tensor& t, SeededRng& rng, double bound, double gap) {
    for (auto& v : t.data()) {
        const double m = rng.uniform(gap, bound);
        v = static_cast<real>(rng.bernoulli(0.5) ? m : -m);
    }
}

Tensor random_tensor(const Shape& s, SeededRng& rng, double bound = 1.0) {
    Tensor t(s);
    fill_uniform(t, rng, bound);
    return t;
}

std::size_t pick(SeededRng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Shape random_volume(SeededRng& rng, std::size_t max_channels) {
    return Shape{pick(rng, 2, 4), pick(rng, 2, 4), pick(rng, 2, 4), pick(rng, 1, max_channels)};
}

// Fan-in scaled weights; rank-1 tensors get small random offsets so biases
// and per-channel weights are exercised away from zero.
void randomize(std::vector<std::pair<std::string, Tensor*>>& params, SeededRng& rng) {
    for (auto& [name, t] : params) {
        if (t->rank() < 2) {
            fill_uniform(*t, rng, 0.5);
        } else {
            const double fan_in = static_cast<double>(t->size() / t->extent(t->rank() - 1));
            fill_uniform(*t, rng, std::sqrt(3.0 / fan_in));
        }
    }
}

GradCheckReport check(const std::string& name, const ScalarComputation& f,
                      const std::vector<std::pair<std::string, Tensor*>>& params, const GradCheckOptions& o) {
    std::vector<CheckedTensor> checked;
    for (const auto& [n, t] : params) checked.push_back({n, t});
    GradCheckReport r = finite_diff_check(name, f, checked, o);
    r.pass = r.max_relative_error <= o.tolerance;
    return r;
}

std::vector<std::pair<std::string, Tensor*>> lstm_params(ConvLSTMParams& p) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto [n, t] : p.tensors()) out.emplace_back(std::string(n), t);
    return out;
}

GradSuiteCase conv_case(std::string name, std::size_t kernel, Padding padding) {
    return {name, [=](std::uint64_t seed, const GradCheckOptions& o) {
                SeededRng rng(seed);
                const Shape xs = random_volume(rng, 4);
                const std::size_t cout = pick(rng, 1, 4);
                Tensor x = random_tensor(xs, rng);
                Tensor k(Shape{kernel, kernel, kernel, xs[3], cout});
                Tensor b(Shape{cout});
                std::vector<std::pair<std::string, Tensor*>> params{{"kernel", &k}, {"bias", &b}};
                randomize(params, rng);
                params.insert(params.begin(), {"input", &x});
                const Tensor w = random_tensor(Shape{xs[0], xs[1], xs[2], cout}, rng);
                return check(name, [&](Tape& t) {
                    return weighted_sum(conv3d(t.param(x), t.param(k), t.param(b), padding), w);
                }, params, o);
            }};
}

GradSuiteCase activation_case(Activation kind) {
    const std::string name = "activation[" + std::string(activation_name(kind)) + "]";
    return {name, [=](std::uint64_t seed, const GradCheckOptions& o) {
                SeededRng rng(seed);
                const Shape xs = random_volume(rng, 8);
                Tensor x(xs);
                fill_off_zero(x, rng, 2.0, 0.05);
                const Tensor w = random_tensor(xs, rng);
                return check(name, [&](Tape& t) { return weighted_sum(activation(t.param(x), kind), w); },
                             {{"input", &x}}, o);
            }};
}

GradSuiteCase dense_case(Activation kind) {
    const std::string name = "dense[" + std::string(activation_name(kind)) + "]";
    return {name, [=](std::uint64_t seed, const GradCheckOptions& o) {
                SeededRng rng(seed);
                const std::size_t in = pick(rng, 1, 8), out = pick(rng, 1, 8);
                Tensor x = random_tensor(Shape{in}, rng);
                DenseParams p = DenseParams::zeros(in, out);
                std::vector<std::pair<std::string, Tensor*>> params{{"weight", &p.weight}, {"bias", &p.bias}};
                randomize(params, rng);
                params.insert(params.begin(), {"input", &x});
                const Tensor w = random_tensor(Shape{out}, rng);
                return check(name, [&](Tape& t) { return weighted_sum(dense_forward(t.param(x), p, kind), w); },
                             params, o);
            }};
}

GradSuiteCase convlstm_case(bool sequence, Peephole peephole) {
    const std::string name = std::string(sequence ? "convlstm_sequence[" : "convlstm_step[") +
                             std::string(peephole_name(peephole)) + "]";
    return {name, [=](std::uint64_t seed, const GradCheckOptions& o) {
                SeededRng rng(seed);
                const Shape xs = random_volume(rng, 3);
                const std::size_t ch = pick(rng, 1, 3);
                const Shape hs{xs[0], xs[1], xs[2], ch};
                ConvLSTMParams p = ConvLSTMParams::zeros(xs[3], ch, 3, peephole);
                auto params = lstm_params(p);
                randomize(params, rng);
                for (auto& v : p.bf.data()) v += 1;
                const Tensor w = random_tensor(hs, rng);
                if (!sequence) {
                    Tensor x = random_tensor(xs, rng);
                    Tensor h = random_tensor(hs, rng);
                    Tensor c = random_tensor(hs, rng);
                    params.insert(params.begin(), {{"input", &x}, {"hidden", &h}, {"cell", &c}});
                    return check(name, [&](Tape& t) {
                        const RecurrentVars next = convlstm_step(t.param(x), {t.param(h), t.param(c), false}, p);
                        return weighted_sum(next.hidden, w) + weighted_sum(next.cell, w);
                    }, params, o);
                }
                const std::size_t steps = pick(rng, 2, 3);
                std::vector<Tensor> xs_seq;
                for (std::size_t s = 0; s < steps; ++s) xs_seq.push_back(random_tensor(xs, rng));
                for (std::size_t s = 0; s < steps; ++s) params.insert(params.begin() + static_cast<long>(s), {"x" + std::to_string(s), &xs_seq[s]});
                return check(name, [&](Tape& t) {
                    std::vector<Var> seq;
                    for (const auto& x : xs_seq) seq.push_back(t.param(x));
                    return weighted_sum(convlstm_sequence(seq, p), w);
                }, params, o);
            }};
}

std::vector<std::pair<std::string, Tensor*>> ssa_params(SSAParams& p) {
    std::vector<std::pair<std::string, Tensor*>> out{{"entry.kernel", &p.entry.kernel}, {"entry.bias", &p.entry.bias}};
    for (auto [n, t] : p.lstm.tensors()) out.emplace_back("lstm." + std::string(n), t);
    out.emplace_back("exit.kernel", &p.exit.kernel);
    out.emplace_back("exit.bias", &p.exit.bias);
    return out;
}

GradSuiteCase ssa_case(std::string name, SequenceMode mode, bool residual) {
    return {name, [=](std::uint64_t seed, const GradCheckOptions& o) {
                SeededRng rng(seed);
                const Shape xs = random_volume(rng, 4);
                SSAConfig cfg;
                cfg.sequence = mode;
                cfg.chunks = mode == SequenceMode::channel_chunks ? 2 : 1;
                cfg.inner_channels = 2 * pick(rng, 1, 2);
                cfg.residual = residual;
                // Smooth entry activation: a relu kink inside +-epsilon would
                // make the central difference meaningless.
                cfg.entry_activation = Activation::tanh;
                SSAParams p = SSAParams::zeros(xs[3], cfg);
                auto params = ssa_params(p);
                randomize(params, rng);
                Tensor x = random_tensor(xs, rng);
                params.insert(params.begin(), {"input", &x});
                const Tensor w = random_tensor(xs, rng);
                return check(name, [&](Tape& t) { return weighted_sum(ssa_forward(t.param(x), p, cfg), w); }, params, o);
            }};
}

GradSuiteCase senet_case() {
    return {"senet", [](std::uint64_t seed, const GradCheckOptions& o) {
                SeededRng rng(seed);
                const Shape xs = random_volume(rng, 8);
                SEParams p = SEParams::zeros(xs[3], 16);
                std::vector<std::pair<std::string, Tensor*>> params{{"squeeze.weight", &p.squeeze.weight},
                                                                    {"squeeze.bias", &p.squeeze.bias},
                                                                    {"excite.weight", &p.excite.weight},
                                                                    {"excite.bias", &p.excite.bias}};
                randomize(params, rng);
                Tensor x = random_tensor(xs, rng);
                params.insert(params.begin(), {"input", &x});
                const Tensor w = random_tensor(xs, rng);
                return check("senet", [&](Tape& t) { return weighted_sum(senet_forward(t.param(x), p), w); }, params, o);
            }};
}

} // namespace

std::vector<GradSuiteCase> gradient_suite() {
    std::vector<GradSuiteCase> cases;
    cases.push_back(conv_case("conv3d[k3,zeros]", 3, Padding::zeros));
    cases.push_back(conv_case("conv3d[k3,replicate]", 3, Padding::replicate));
    cases.push_back(conv_case("conv3d[k1]", 1, Padding::zeros));
    for (auto kind : {Activation::sigmoid, Activation::tanh, Activation::relu, Activation::gelu}) {
        cases.push_back(activation_case(kind));
    }
    cases.push_back(dense_case(Activation::gelu));
    cases.push_back(dense_case(Activation::linear));
    cases.push_back({"dropout[infer]", [](std::uint64_t seed, const GradCheckOptions& o) {
                         SeededRng rng(seed);
                         const Shape xs = random_volume(rng, 8);
                         Tensor x = random_tensor(xs, rng);
                         const Tensor w = random_tensor(xs, rng);
                         return check("dropout[infer]", [&](Tape& t) {
                             SeededRng unused(0);
                             return weighted_sum(dropout(t.param(x), 0.5, Mode::infer, unused), w);
                         }, {{"input", &x}}, o);
                     }});
    cases.push_back({"dropout[train,fixed mask]", [](std::uint64_t seed, const GradCheckOptions& o) {
                         SeededRng rng(seed);
                         const Shape xs = random_volume(rng, 8);
                         Tensor x = random_tensor(xs, rng);
                         const Tensor w = random_tensor(xs, rng);
                         const std::uint64_t mask_seed = rng.next_u64();
                         return check("dropout[train,fixed mask]", [&](Tape& t) {
                             SeededRng mask_rng(mask_seed);
                             return weighted_sum(dropout(t.param(x), 0.5, Mode::train, mask_rng), w);
                         }, {{"input", &x}}, o);
                     }});
    cases.push_back({"global_avg_pool", [](std::uint64_t seed, const GradCheckOptions& o) {
                         SeededRng rng(seed);
                         const Shape xs = random_volume(rng, 8);
                         Tensor x = random_tensor(xs, rng);
                         const Tensor w = random_tensor(Shape{xs[3]}, rng);
                         return check("global_avg_pool", [&](Tape& t) { return weighted_sum(global_avg_pool(t.param(x)), w); },
                                      {{"input", &x}}, o);
                     }});
    cases.push_back({"downsample2", [](std::uint64_t seed, const GradCheckOptions& o) {
                         SeededRng rng(seed);
                         const Shape xs = random_volume(rng, 8);
                         Tensor x = random_tensor(xs, rng);
                         const Tensor w = random_tensor(Shape{(xs[0] + 1) / 2, (xs[1] + 1) / 2, (xs[2] + 1) / 2, xs[3]}, rng);
                         return check("downsample2", [&](Tape& t) { return weighted_sum(downsample2(t.param(x)), w); },
                                      {{"input", &x}}, o);
                     }});
    cases.push_back({"softmax_cross_entropy", [](std::uint64_t seed, const GradCheckOptions& o) {
                         SeededRng rng(seed);
                         Tensor logits = random_tensor(Shape{2}, rng, 2.0);
                         const std::size_t label = static_cast<std::size_t>(rng.below(2));
                         return check("softmax_cross_entropy", [&](Tape& t) {
                             return cross_entropy(softmax(t.param(logits)), label);
                         }, {{"logits", &logits}}, o);
                     }});
    for (bool sequence : {false, true}) {
        for (auto mode : {Peephole::conv, Peephole::hadamard, Peephole::none}) cases.push_back(convlstm_case(sequence, mode));
    }
    cases.push_back(ssa_case("ssa[single-step]", SequenceMode::single_step, false));
    cases.push_back(ssa_case("ssa[channel-chunks]", SequenceMode::channel_chunks, false));
    cases.push_back(ssa_case("ssa[residual]", SequenceMode::single_step, true));
    cases.push_back(senet_case());
    cases.push_back({"model[miniature]", [](std::uint64_t seed, const GradCheckOptions& o) {
                         SeededRng rng(seed);
                         ModelConfig cfg = miniature_model_config();
                         Model m = build_model(cfg, rng);
                         std::vector<std::pair<std::string, Tensor*>> params;
                         for (auto& p : m.parameters()) params.emplace_back(p.name, p.tensor);
                         // Perturb biases off their zero init so every path carries signal.
                         for (auto& [n, t] : params) {
                             if (t->rank() == 1) {
                                 for (auto& v : t->data()) v += static_cast<real>(rng.uniform(-0.2, 0.2));
                             }
                         }
                         Tensor volume = random_tensor(cfg.input(), rng);
                         for (auto& v : volume.data()) v += 1;
                         const std::size_t label = static_cast<std::size_t>(rng.below(2));
                         const std::uint64_t dropout_seed = rng.next_u64();
                         return check("model[miniature]", [&](Tape& t) {
                             SeededRng drop(dropout_seed);
                             const Var probs = model_forward(t.constant(volume), m, Mode::infer, drop);
                             return cross_entropy(probs, label) + regularization_penalty(t, m.head, cfg.regularization);
                         }, params, o);
                     }});
    return cases;
}

GradSuiteResult run_gradient_suite(std::size_t seeds, const GradCheckOptions& options,
                                   const GradReportCallback& on_report) {
    GradSuiteResult result;
    const auto cases = gradient_suite();
    for (std::size_t c = 0; c < cases.size(); ++c) {
        for (std::uint64_t s = 0; s < seeds; ++s) {
            GradCheckReport r = cases[c].run(derive_seed(options.seed, c, s), options);
            result.max_relative_error = std::max(result.max_relative_error, r.max_relative_error);
            result.pass = result.pass && r.pass;
            if (on_report) on_report(r, s);
            result.reports.push_back(std::move(r));
        }
    }
    return result;
}

} // namespace ssanet
