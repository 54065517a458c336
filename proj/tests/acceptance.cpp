// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass the source tree as argv[1] (defaults
// to the tree this binary was configured from).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "ssanet/attention.hpp"
#include "ssanet/config.hpp"
#include "ssanet/eval.hpp"
#include "ssanet/gradsuite.hpp"
#include "ssanet/heatmap.hpp"
#include "ssanet/io.hpp"
#include "ssanet/layers.hpp"
#include "ssanet/model.hpp"
#include "ssanet/optim.hpp"

using namespace ssanet;
namespace fs = std::filesystem;

namespace {

fs::path g_source = SSANET_SOURCE_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. gradient suite

Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const GradCheckOptions options = default_gradcheck_options();
    const auto cases = gradient_suite();
    Outcome o;
    double worst = 0.0;
    std::string failed;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        double case_worst = 0.0;
        for (std::uint64_t s = 0; s < 10; ++s) {
            const GradCheckReport r = cases[c].run(derive_seed(options.seed, c, s), options);
            case_worst = std::max(case_worst, r.max_relative_error);
        }
        worst = std::max(worst, case_worst);
        std::printf("    %s %-28s max rel err %.3e\n", case_worst <= options.tolerance ? "ok  " : "FAIL",
                    cases[c].name.c_str(), case_worst);
        if (case_worst > options.tolerance) failed += (failed.empty() ? "" : ", ") + cases[c].name;
    }
    const double secs = seconds_since(t0);
    o.pass = failed.empty() && secs <= 120.0;
    o.detail = std::to_string(cases.size()) + " cases x 10 seeds, max rel err " + fmt("%.3e", worst) + " (tol " +
               fmt("%.0e", options.tolerance) + "), " + fmt("%.1f s", secs);
    if (!failed.empty()) o.detail += "; over tolerance: " + failed;
    return o;
}

// ---------------------------------------------------------------------------
// 2. shapes at the full feature size

Outcome shapes() {
    Outcome o;
    SeededRng rng(2);
    const Tensor features = oracle::random_tensor(Shape{7, 9, 7, 1024}, rng);
    std::string got;

    ModelConfig cfg; // precomputed (7,9,7,1024) features
    cfg.attention = AttentionKind::ssa;
    SeededRng init(3);
    const Model ssa_model = build_model(cfg, init);
    const Tensor a = ssa_forward(features, ssa_model.ssa, cfg.ssa);
    got += "ssa " + a.shape().str();
    o.pass = o.pass && a.shape() == features.shape();

    cfg.attention = AttentionKind::senet;
    const Model se_model = build_model(cfg, init);
    const Tensor b = senet_forward(features, se_model.se);
    got += ", senet " + b.shape().str();
    o.pass = o.pass && b.shape() == features.shape();

    for (const Model* m : {&ssa_model, &se_model}) {
        o.pass = o.pass && m->head.front().in() == 1024;
        const Tensor probs = model_predict(*m, features);
        o.pass = o.pass && probs.shape() == Shape{2};
    }
    o.detail = got + ", head input " + std::to_string(ssa_model.head.front().in()) + ", probabilities (2)";
    return o;
}

// ---------------------------------------------------------------------------
// 3. ConvLSTM closed forms

Tensor scalar_volume(double v) { return Tensor(Shape{1, 1, 1, 1}, std::vector<real>{static_cast<real>(v)}); }

Outcome convlstm_closed_forms() {
    Outcome o;
    double worst = 0.0;
    // Zero parameters: every gate exactly 0.5, every state exactly 0.
    for (auto mode : {Peephole::conv, Peephole::hadamard, Peephole::none}) {
        const ConvLSTMParams p = ConvLSTMParams::zeros(3, 4, 3, mode);
        SeededRng rng(8);
        const Tensor x = oracle::random_tensor(Shape{3, 2, 4, 3}, rng);
        ConvLSTMGates g;
        const ConvLSTMState s = convlstm_step(x, ConvLSTMState::zeros({3, 2, 4, 3}, 4), p, &g);
        for (const Tensor* t : {&g.input, &g.forget, &g.output})
            for (auto v : t->values()) o.pass = o.pass && v == real(0.5);
        for (auto v : s.cell.values()) o.pass = o.pass && v == real(0);
        for (auto v : s.hidden.values()) o.pass = o.pass && v == real(0);
    }
    const bool zero_ok = o.pass;

    // Scalar step and sequence against the gate equations evaluated in double.
    const oracle::ScalarLSTM base{0.7, -0.4, 1.1, 0.3, 0.5, -0.8, 0.9, 0.2, 0.35, -0.6, 0.45, 0.1, 0.4, -0.2, 0.05};
    const double xs[] = {0.9, -0.5, 1.3};
    for (auto mode : {Peephole::conv, Peephole::hadamard, Peephole::none}) {
        auto ref = base;
        ref.peephole = mode != Peephole::none;
        ConvLSTMParams p = ConvLSTMParams::zeros(1, 1, 1, mode);
        auto set = [](Tensor& t, double v) { t.data()[0] = static_cast<real>(v); };
        set(p.wxi, ref.wxi), set(p.wxf, ref.wxf), set(p.wxc, ref.wxc), set(p.wxo, ref.wxo);
        set(p.whi, ref.whi), set(p.whf, ref.whf), set(p.whc, ref.whc), set(p.who, ref.who);
        if (mode != Peephole::none) set(p.wci, ref.wci), set(p.wcf, ref.wcf), set(p.wco, ref.wco);
        set(p.bi, ref.bi), set(p.bf, ref.bf), set(p.bc, ref.bc), set(p.bo, ref.bo);

        oracle::ScalarLSTM::State prev;
        prev.h = -0.3;
        prev.c = 0.8;
        const auto want = ref.step(0.9, prev);
        ConvLSTMGates g;
        const ConvLSTMState got = convlstm_step(scalar_volume(0.9), {scalar_volume(prev.h), scalar_volume(prev.c)}, p, &g);
        for (auto [a, b] : {std::pair<double, double>{g.input[0], want.i}, {g.forget[0], want.f},
                            {g.output[0], want.o}, {got.cell[0], want.c}, {got.hidden[0], want.h}})
            worst = std::max(worst, std::fabs(a - b));

        oracle::ScalarLSTM::State s;
        std::vector<Tensor> seq;
        for (double x : xs) {
            s = ref.step(x, s);
            seq.push_back(scalar_volume(x));
        }
        worst = std::max(worst, std::fabs(convlstm_sequence(seq, p)[0] - s.h));
    }

    // Saturated forget gate: the new cell no longer depends on the previous one.
    double saturated = 0.0;
    {
        SeededRng rng(9);
        ConvLSTMParams p = ConvLSTMParams::zeros(2, 3, 3, Peephole::conv);
        for (auto [name, t] : p.tensors())
            for (auto& v : t->data()) v = static_cast<real>(rng.uniform(-0.3, 0.3));
        p.bf.fill(-50.0f);
        p.wci.fill(0.0f), p.wcf.fill(0.0f), p.wco.fill(0.0f);
        const Tensor x = oracle::random_tensor(Shape{2, 3, 2, 2}, rng);
        const Tensor h = oracle::random_tensor(Shape{2, 3, 2, 3}, rng);
        const Tensor c1 = oracle::random_tensor(Shape{2, 3, 2, 3}, rng, -3, 3);
        const Tensor c2 = oracle::random_tensor(Shape{2, 3, 2, 3}, rng, -3, 3);
        const auto a = convlstm_step(x, {h, c1}, p);
        const auto b = convlstm_step(x, {h, c2}, p);
        for (std::size_t i = 0; i < a.cell.size(); ++i) saturated = std::max(saturated, std::fabs(double(a.cell[i]) - b.cell[i]));
    }
    o.pass = zero_ok && worst <= 1e-6 && saturated <= 1e-6;
    o.detail = std::string("zero params ") + (zero_ok ? "exact" : "NOT exact") + ", scalar oracle max diff " +
               fmt("%.2e", worst) + ", saturated-forget cell diff " + fmt("%.2e", saturated);
    return o;
}

// ---------------------------------------------------------------------------
// 4. gradient centralization

Outcome centralization() {
    Outcome o;
    double worst_mean = 0.0, worst_idem = 0.0;
    bool bias_ok = true;
    std::size_t checked = 0;
    SeededRng rng(4);
    std::vector<ModelConfig> configs;
    ModelConfig full;
    configs.push_back(full);
    full.attention = AttentionKind::senet;
    configs.push_back(full);
    ModelConfig mini = miniature_model_config();
    mini.ssa.peephole = Peephole::hadamard;
    configs.push_back(mini);
    for (const auto& cfg : configs) {
        Model m = allocate_model(cfg);
        for (const auto& p : m.parameters()) {
            const Tensor g = oracle::random_tensor(p.tensor->shape(), rng, -2.0, 2.0);
            const Tensor c = centralize_gradient(g);
            if (g.rank() < 2) {
                bias_ok = bias_ok && c.values() == g.values();
                continue;
            }
            ++checked;
            const std::size_t out = g.extent(g.rank() - 1), rows = g.size() / out;
            for (std::size_t k = 0; k < out; ++k) {
                double sum = 0.0;
                for (std::size_t r = 0; r < rows; ++r) sum += c[r * out + k];
                worst_mean = std::max(worst_mean, std::fabs(sum / static_cast<double>(rows)));
            }
            const Tensor twice = centralize_gradient(c);
            for (std::size_t i = 0; i < c.size(); ++i) worst_idem = std::max(worst_idem, std::fabs(double(twice[i]) - c[i]));
        }
    }
    o.pass = bias_ok && worst_mean <= 1e-6 && worst_idem <= 1e-7;
    o.detail = std::to_string(checked) + " rank>=2 tensors, max slice mean " + fmt("%.2e", worst_mean) +
               ", idempotence " + fmt("%.2e", worst_idem) + ", biases " + (bias_ok ? "untouched" : "CHANGED");
    return o;
}

// ---------------------------------------------------------------------------
// 5. metrics oracle

Outcome metrics() {
    Outcome o;
    // 14 samples: class 1 TP 5 / FN 3, class 0 TP 4 / FN 2.
    std::vector<int> preds, truths;
    auto add = [&](int t, int p, int n) {
        for (int i = 0; i < n; ++i) truths.push_back(t), preds.push_back(p);
    };
    add(1, 1, 5), add(1, 0, 3), add(0, 0, 4), add(0, 1, 2);
    const FoldMetrics m = compute_metrics(preds, truths);
    const double p1 = 5.0 / 7, r1 = 5.0 / 8, p0 = 4.0 / 7, r0 = 4.0 / 6;
    const double want_acc = 9.0 / 14, want_p = (p1 + p0) / 2, want_r = (r1 + r0) / 2;
    const double want_f1 = (2 * p1 * r1 / (p1 + r1) + 2 * p0 * r0 / (p0 + r0)) / 2;
    const double example = std::max({std::fabs(m.accuracy - want_acc), std::fabs(m.precision - want_p),
                                     std::fabs(m.recall - want_r), std::fabs(m.f1 - want_f1)});

    // Swapping both label names leaves accuracy and the macro scores unchanged.
    SeededRng rng(5);
    double swap = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<int> p(n), t(n), ps(n), ts(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = static_cast<int>(rng.below(2)), t[i] = static_cast<int>(rng.below(2));
            ps[i] = 1 - p[i], ts[i] = 1 - t[i];
        }
        const FoldMetrics a = compute_metrics(p, t), b = compute_metrics(ps, ts);
        swap = std::max({swap, std::fabs(a.accuracy - b.accuracy), std::fabs(a.precision - b.precision),
                         std::fabs(a.recall - b.recall), std::fabs(a.f1 - b.f1)});
    }
    o.pass = example <= 1e-9 && swap <= 1e-12;
    o.detail = "example acc " + fmt("%.4f", m.accuracy) + " P " + fmt("%.4f", m.precision) + " R " +
               fmt("%.4f", m.recall) + " F1 " + fmt("%.6f", m.f1) + " (max diff " + fmt("%.1e", example) +
               "), 100 label swaps max diff " + fmt("%.1e", swap);
    return o;
}

// ---------------------------------------------------------------------------
// 6 and 8. toy learning and heatmap localization share one trained model

constexpr std::uint64_t kHoldoutTag = 0x686f6c646f7574ULL; // same split as `ssanet train`
constexpr std::uint64_t kInitTag = 0x696e6974ULL;

struct ToyRun {
    RunConfig cfg;
    Dataset train_set, test_set;
    Model model;
    Evaluation test_eval;
    double threshold_accuracy = 0.0;
    double seconds = 0.0;
};

double pooled_roi_mean(const Tensor& volume, const Tensor& mask) {
    double sum = 0.0, n = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] > 0) sum += volume[i], n += 1;
    return sum / n;
}

ToyRun toy_run() {
    ToyRun run;
    run.cfg = load_config(g_source / "configs" / "toy-ssa.json");
    const RunConfig& cfg = run.cfg;
    const Dataset data = synthetic_dataset(cfg.synth);
    const FoldSplit split = stratified_holdout(data.labels, cfg.val_fraction, derive_seed(cfg.seed, kHoldoutTag));
    run.train_set = subset(data, split.train);
    run.test_set = subset(data, split.test);

    // Pooled-ROI threshold classifier: midpoint of the class means on train.
    const Tensor mask = roi_mask(cfg.synth);
    double mean[2] = {0, 0}, count[2] = {0, 0};
    for (std::size_t i = 0; i < run.train_set.size(); ++i) {
        mean[run.train_set.labels[i]] += pooled_roi_mean(run.train_set.inputs[i], mask);
        count[run.train_set.labels[i]] += 1;
    }
    const double m0 = mean[0] / count[0], m1 = mean[1] / count[1], cut = (m0 + m1) / 2;
    std::size_t right = 0;
    for (std::size_t i = 0; i < run.test_set.size(); ++i) {
        const int guess = (pooled_roi_mean(run.test_set.inputs[i], mask) < cut) == (m1 < m0) ? 1 : 0;
        right += guess == run.test_set.labels[i];
    }
    run.threshold_accuracy = static_cast<double>(right) / static_cast<double>(run.test_set.size());

    const auto t0 = std::chrono::steady_clock::now();
    SeededRng init(derive_seed(cfg.seed, kInitTag));
    TrainResult result = train(build_model(cfg.model, init), run.train_set, nullptr, cfg.train);
    run.model = std::move(result.model);
    run.test_eval = evaluate(run.model, run.test_set, cfg.train.workers);
    run.seconds = seconds_since(t0);
    return run;
}

Outcome toy_learning(const ToyRun& run) {
    Outcome o;
    o.pass = run.train_set.size() == 64 && run.test_set.size() == 32 && run.threshold_accuracy >= 0.95 &&
             run.test_eval.accuracy >= 0.90 && run.seconds <= 600.0;
    o.detail = std::to_string(run.train_set.size()) + " train / " + std::to_string(run.test_set.size()) +
               " test, pooled-ROI threshold " + fmt("%.3f", run.threshold_accuracy) + ", SSANet test accuracy " +
               fmt("%.3f", run.test_eval.accuracy) + " after " + std::to_string(run.cfg.train.epochs) +
               " epochs, " + fmt("%.0f s", run.seconds);
    return o;
}

Outcome heatmap_localization(const ToyRun& run) {
    Outcome o;
    const Tensor mask = roi_mask(run.cfg.synth);
    const auto& s = run.cfg.synth.shape;
    // Correctly classified class-1 subjects: test split first, then train.
    std::vector<const Tensor*> picked;
    for (std::size_t i = 0; i < run.test_set.size() && picked.size() < 10; ++i)
        if (run.test_set.labels[i] == 1 && run.test_eval.predictions[i] == 1) picked.push_back(&run.test_set.inputs[i]);
    if (picked.size() < 10) {
        const Evaluation tr = evaluate(run.model, run.train_set, run.cfg.train.workers);
        for (std::size_t i = 0; i < run.train_set.size() && picked.size() < 10; ++i)
            if (run.train_set.labels[i] == 1 && tr.predictions[i] == 1) picked.push_back(&run.train_set.inputs[i]);
    }
    double ratio_sum = 0.0, in_sum = 0.0, out_sum = 0.0;
    for (const Tensor* volume : picked) {
        const Tensor map = trilinear_resample(attention_map(attended_features(run.model, *volume)), {s[0], s[1], s[2]});
        double in = 0, out = 0, n_in = 0, n_out = 0;
        for (std::size_t v = 0; v < map.size(); ++v) {
            if (mask[v] > 0) in += map[v], n_in += 1;
            else out += map[v], n_out += 1;
        }
        in /= n_in, out /= n_out;
        in_sum += in, out_sum += out;
        ratio_sum += out > 0 ? in / out : 0.0;
    }
    const double n = static_cast<double>(picked.size());
    const double ratio = picked.empty() ? 0.0 : ratio_sum / n;
    o.pass = picked.size() == 10 && ratio >= 2.0;
    o.detail = std::to_string(picked.size()) + " subjects, mean inside " + fmt("%.4f", in_sum / std::max(n, 1.0)) +
               " outside " + fmt("%.4f", out_sum / std::max(n, 1.0)) + ", ratio " + fmt("%.3f", ratio) +
               " (need >= 2)";
    return o;
}

// ---------------------------------------------------------------------------
// 7. trend check

Outcome trend() {
    Outcome o;
    double acc[2];
    std::string detail;
    const char* files[] = {"cv-ssa.json", "cv-senet.json"};
    for (int i = 0; i < 2; ++i) {
        const RunConfig cfg = load_config(g_source / "configs" / files[i]);
        const Dataset data = synthetic_dataset(cfg.synth);
        const MetricsReport r = cross_validate(data, cfg.model, cfg.train, cfg.cv, cfg.seed);
        acc[i] = r.mean.accuracy;
        detail += std::string(i ? ", " : "") + (i ? "SENet " : "SSA ") + fmt("%.3f +- %.3f", r.mean.accuracy, r.stddev.accuracy);
    }
    o.pass = acc[0] >= acc[1] - 0.02;
    o.detail = "5-fold mean accuracy " + detail;
    return o;
}

// ---------------------------------------------------------------------------
// 9. determinism

Outcome determinism() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "ssanet_acceptance";
    fs::remove_all(root);
    std::vector<std::vector<std::uint8_t>> reports[2];
    for (int run = 0; run < 2; ++run) {
        const std::string out = (root / ("cv" + std::to_string(run))).string();
        const std::string cfg = (g_source / "configs" / "miniature.json").string();
        const char* argv[] = {"ssanet", "--config", cfg.c_str(), "--seed", "7", "--workers", "1", "--out", out.c_str(), "cv"};
        std::ostringstream sink_out, sink_err;
        if (cli_main(10, argv, sink_out, sink_err) != 0) {
            o.pass = false;
            o.detail = "cv failed: " + sink_err.str();
            return o;
        }
        for (const char* f : {"report.json", "report.txt", "config.json"}) reports[run].push_back(read_file(fs::path(out) / f));
    }
    const bool identical = reports[0] == reports[1];

    // VTF roundtrips, including values that arithmetic comparisons would blur.
    SeededRng rng(9);
    bool exact = true;
    std::size_t tensors = 0;
    for (const Shape& s : {Shape{}, Shape{5}, Shape{2, 3}, Shape{3, 4, 5, 2}, Shape{7, 9, 7, 16}}) {
        Tensor t = oracle::random_tensor(s, rng, -1e3, 1e3);
        if (t.size() >= 4) {
            t.data()[0] = -0.0f;
            t.data()[1] = std::numeric_limits<real>::denorm_min();
            t.data()[2] = std::numeric_limits<real>::max();
            t.data()[3] = std::numeric_limits<real>::lowest();
        }
        const fs::path p = root / ("t" + std::to_string(tensors++) + ".vtf");
        vtf_write(p, t);
        const Tensor back = vtf_read(p);
        exact = exact && back.shape() == t.shape() && vtf_encode(back) == vtf_encode(t) &&
                std::memcmp(back.data().data(), t.data().data(), t.size() * sizeof(real)) == 0;
    }
    o.pass = identical && exact;
    o.detail = std::string("cv reports ") + (identical ? "byte-identical" : "DIFFER") + " across two runs, " +
               std::to_string(tensors) + " VTF roundtrips " + (exact ? "bit-exact" : "NOT bit-exact");
    return o;
}

} // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_source = argv[1];
    int failures = 0;
    auto report = [&](int n, const char* title, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        failures += !o.pass;
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, title, o.detail.c_str());
        std::fflush(stdout);
    };
    report(1, "gradient suite", gradients);
    report(2, "shape fidelity", shapes);
    report(3, "ConvLSTM closed forms", convlstm_closed_forms);
    report(4, "gradient centralization", centralization);
    report(5, "metrics oracle", metrics);
    ToyRun toy;
    bool toy_ok = true;
    std::string toy_error;
    try {
        toy = toy_run();
    } catch (const std::exception& e) {
        toy_ok = false;
        toy_error = e.what();
    }
    auto toy_failed = [&] { return Outcome{false, "toy run threw: " + toy_error}; };
    report(6, "toy learning", [&] { return toy_ok ? toy_learning(toy) : toy_failed(); });
    report(7, "trend check", trend);
    report(8, "heatmap localization", [&] { return toy_ok ? heatmap_localization(toy) : toy_failed(); });
    report(9, "determinism", determinism);
    std::printf("%d of 9 criteria passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
