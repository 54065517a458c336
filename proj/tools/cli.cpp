#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include "ssanet/config.hpp"
#include "ssanet/gradsuite.hpp"
#include "ssanet/heatmap.hpp"
#include "ssanet/io.hpp"

namespace ssanet {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Seed tags for the single train/validation run.
constexpr std::uint64_t kHoldoutTag = 0x686f6c646f7574ULL; // "holdout"
constexpr std::uint64_t kInitTag = 0x696e6974ULL;          // "init"

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
    std::string mode;
    std::string manifest;
    std::string model;
    std::size_t subject = 0;
    std::size_t seeds = 10;
    std::string only;
};

// One-line error kinds.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

RunConfig resolve_config(const Options& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed) cfg.set_seed(*o.seed);
    if (!o.mode.empty()) {
        try {
            cfg.model.attention = parse_attention_kind(o.mode);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("--mode: ") + e.what());
        }
    }
    if (o.workers) cfg.train.workers = *o.workers;
    cfg.validate();
    return cfg;
}

fs::path require_out(const Options& o, const char* command) {
    if (o.out.empty()) throw UsageError(std::string(command) + " requires --out");
    fs::create_directories(o.out);
    return o.out;
}

Dataset load_data(const Options& o, const RunConfig& cfg, std::ostream& err) {
    if (!o.manifest.empty()) return load_dataset(read_manifest(o.manifest));
    err << "no --manifest given; generating " << 2 * cfg.synth.per_class << " synthetic subjects\n";
    return synthetic_dataset(cfg.synth);
}

std::string model_title(AttentionKind kind) {
    switch (kind) {
    case AttentionKind::ssa: return "SSANet";
    case AttentionKind::senet: return "SENet";
    case AttentionKind::none: return "No attention";
    }
    return "?";
}

json metrics_json(const FoldMetrics& m) {
    return json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

int cmd_gen_data(const Options& o, std::ostream& out, std::ostream&) {
    const RunConfig cfg = resolve_config(o);
    const fs::path dir = require_out(o, "gen-data");
    const fs::path manifest = gen_synthetic(cfg.synth, dir);
    write_file_atomic(dir / "config.json", config_to_json(cfg));
    out << manifest.string() << "\n";
    return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = resolve_config(o);
    const fs::path dir = require_out(o, "train");
    write_file_atomic(dir / "config.json", config_to_json(cfg));
    const Dataset data = load_data(o, cfg, err);
    const FoldSplit split = stratified_holdout(data.labels, cfg.val_fraction, derive_seed(cfg.seed, kHoldoutTag));
    const Dataset train_set = subset(data, split.train);
    const Dataset val_set = subset(data, split.test);

    SeededRng init(derive_seed(cfg.seed, kInitTag));
    Model model = build_model(cfg.model, init);
    std::string history;
    auto on_epoch = [&](const EpochRecord& r) {
        json j{{"epoch", r.epoch}, {"loss", r.loss}, {"accuracy", r.accuracy}};
        if (r.val_loss) j["val_loss"] = *r.val_loss;
        if (r.val_accuracy) j["val_accuracy"] = *r.val_accuracy;
        history += j.dump() + "\n";
        err << "epoch " << r.epoch << " loss " << fmt("%.4f", r.loss) << " acc " << fmt("%.3f", r.accuracy);
        if (r.val_accuracy) err << " val_acc " << fmt("%.3f", *r.val_accuracy);
        err << "\n";
    };
    TrainResult result = train(std::move(model), train_set, val_set.size() ? &val_set : nullptr, cfg.train, on_epoch);
    save_model(dir / "model", result.model, cfg);
    write_file_atomic(dir / "history.jsonl", history);

    json summary{{"train_size", train_set.size()}, {"val_size", val_set.size()}};
    if (val_set.size()) {
        const Evaluation ev = evaluate(result.model, val_set, cfg.train.workers);
        summary["val_loss"] = ev.loss;
        summary["val_metrics"] = metrics_json(compute_metrics(ev.predictions, val_set.labels, cfg.cv.averaging));
    }
    const std::string text = summary.dump(2) + "\n";
    write_file_atomic(dir / "summary.json", text);
    out << text;
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.model.empty()) throw UsageError("eval requires --model");
    LoadedModel loaded = load_model(o.model);
    Options opts = o;
    if (opts.config.empty()) opts.config = (fs::path(o.model) / "config.json").string();
    const RunConfig cfg = resolve_config(opts);
    const Dataset data = load_data(o, cfg, err);
    const Evaluation ev = evaluate(loaded.model, data, cfg.train.workers);
    json j{{"size", data.size()}, {"loss", ev.loss}, {"averaging", std::string(averaging_name(cfg.cv.averaging))}};
    j["metrics"] = metrics_json(compute_metrics(ev.predictions, data.labels, cfg.cv.averaging));
    j["predictions"] = ev.predictions;
    const std::string text = j.dump(2) + "\n";
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_file_atomic(fs::path(o.out) / "eval.json", text);
    }
    out << text;
    return 0;
}

int cmd_cv(const Options& o, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = resolve_config(o);
    const fs::path dir = require_out(o, "cv");
    write_file_atomic(dir / "config.json", config_to_json(cfg));
    const Dataset data = load_data(o, cfg, err);
    const MetricsReport report = cross_validate(data, cfg.model, cfg.train, cfg.cv, cfg.seed,
                                                [&](std::size_t fold, const FoldMetrics& m) {
                                                    err << "fold " << fold << " accuracy " << fmt("%.4f", m.accuracy)
                                                        << "\n";
                                                });
    const std::string table = report.to_table(model_title(cfg.model.attention));
    write_file_atomic(dir / "report.json", report.to_json());
    write_file_atomic(dir / "report.txt", table);
    out << table;
    return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream& err) {
    GradCheckOptions options = default_gradcheck_options();
    if (o.seed) options.seed = *o.seed;
    double worst = 0.0;
    std::size_t ran = 0;
    const auto cases = gradient_suite();
    for (std::size_t c = 0; c < cases.size(); ++c) {
        if (!o.only.empty() && cases[c].name.find(o.only) == std::string::npos) continue;
        double case_worst = 0.0;
        for (std::uint64_t s = 0; s < o.seeds; ++s) {
            const GradCheckReport r = cases[c].run(derive_seed(options.seed, c, s), options);
            case_worst = std::max(case_worst, r.max_relative_error);
        }
        ++ran;
        worst = std::max(worst, case_worst);
        out << (case_worst <= options.tolerance ? "ok   " : "FAIL ") << cases[c].name << "  max rel err "
            << fmt("%.3e", case_worst) << "\n";
    }
    if (ran == 0) throw UsageError("--only '" + o.only + "' matches no gradient case");
    const std::string tol = fmt("%.0e", options.tolerance);
    if (worst <= options.tolerance) {
        out << "PASS, max rel err " << fmt("%.3e", worst) << " <= " << tol << "\n";
        return 0;
    }
    out << "FAIL, max rel err " << fmt("%.3e", worst) << " > " << tol << "\n";
    err << "error: gradcheck: max relative error " << fmt("%.3e", worst) << " exceeds tolerance " << tol << "\n";
    return 1;
}

int cmd_export_heatmaps(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.model.empty()) throw UsageError("export-heatmaps requires --model");
    LoadedModel loaded = load_model(o.model);
    Options opts = o;
    if (opts.config.empty()) opts.config = (fs::path(o.model) / "config.json").string();
    const RunConfig cfg = resolve_config(opts);
    const fs::path dir = require_out(o, "export-heatmaps");
    const Dataset data = load_data(o, cfg, err);
    if (o.subject >= data.size()) {
        throw UsageError("--subject " + std::to_string(o.subject) + " out of range (dataset has " +
                         std::to_string(data.size()) + " subjects)");
    }
    const Tensor& input = data.inputs[o.subject];
    if (loaded.model.config.attention == AttentionKind::none) {
        throw UsageError("export-heatmaps needs a model with an attention block");
    }
    const Tensor map = attention_map(attended_features(loaded.model, input));
    const std::array<std::size_t, 3> target{input.extent(0), input.extent(1), input.extent(2)};
    const HeatmapFiles files = export_heatmap_slices(map, target, dir);
    for (const auto& p : {files.sagittal, files.coronal, files.axial, files.volume}) out << p.string() << "\n";
    return 0;
}

int cmd_print_config(const Options& o, std::ostream& out, std::ostream&) {
    out << config_to_json(resolve_config(o));
    return 0;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatial sequence attention networks on volumetric data"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "JSON run config (unknown keys rejected)");
    app.add_option("--seed", o.seed, "Run seed; overrides the config");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--workers", o.workers, "Worker threads (default 1)")->check(CLI::PositiveNumber);
    app.add_option("--mode", o.mode, "Attention block: ssa, senet or none");
    app.add_option("--manifest", o.manifest, "JSON-lines manifest; synthetic data when omitted");

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset and its manifest");
    auto* trn = app.add_subcommand("train", "Train on a stratified train/validation split");
    auto* evl = app.add_subcommand("eval", "Score a saved model");
    auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation report");
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    auto* heat = app.add_subcommand("export-heatmaps", "Attention heatmap slices for one subject");
    auto* pc = app.add_subcommand("print-config", "Print the fully resolved config");
    for (auto* sub : {evl, heat}) sub->add_option("--model", o.model, "Saved model directory")->required();
    heat->add_option("--subject", o.subject, "Subject index in the dataset");
    grad->add_option("--seeds", o.seeds, "Seeds per case")->check(CLI::PositiveNumber);
    grad->add_option("--only", o.only, "Run only cases whose name contains this text");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << app.help();
        err << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o, out, err);
        if (trn->parsed()) return cmd_train(o, out, err);
        if (evl->parsed()) return cmd_eval(o, out, err);
        if (cv->parsed()) return cmd_cv(o, out, err);
        if (grad->parsed()) return cmd_gradcheck(o, out, err);
        if (heat->parsed()) return cmd_export_heatmaps(o, out, err);
        if (pc->parsed()) return cmd_print_config(o, out, err);
    } catch (const UsageError& e) {
        err << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "error: config: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const FormatError& e) {
        err << "error: format: " << one_line(e.what()) << "\n";
        return 4;
    } catch (const IoError& e) {
        err << "error: io: " << one_line(e.what()) << "\n";
        return 5;
    } catch (const fs::filesystem_error& e) {
        err << "error: io: " << one_line(e.what()) << "\n";
        return 5;
    } catch (const std::exception& e) {
        err << "error: runtime: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 2;
}

} // namespace ssanet
