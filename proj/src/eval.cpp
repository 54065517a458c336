#include "ssanet/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace ssanet {

Averaging parse_averaging(std::string_view name) {
    if (name == "macro") return Averaging::macro;
    if (name == "micro") return Averaging::micro;
    if (name == "positive") return Averaging::positive;
    throw std::invalid_argument("unknown averaging '" + std::string(name) + "'");
}

std::string_view averaging_name(Averaging a) {
    switch (a) {
    case Averaging::macro: return "macro";
    case Averaging::micro: return "micro";
    case Averaging::positive: return "positive";
    }
    return "macro";
}

std::size_t Confusion::total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }

Confusion confusion(std::span<const int> predictions, std::span<const int> truths) {
    if (predictions.size() != truths.size()) {
        throw std::invalid_argument("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(truths.size()) + " truths");
    }
    if (predictions.empty()) throw std::invalid_argument("metrics: empty label lists");
    Confusion c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i];
        const int t = truths[i];
        if ((p != 0 && p != 1) || (t != 0 && t != 1)) throw std::invalid_argument("metrics: labels must be 0 or 1");
        ++c.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return c;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

} // namespace

ClassMetrics class_metrics(const Confusion& c, int cls) {
    ClassMetrics m;
    m.precision = ratio(c.tp(cls), c.tp(cls) + c.fp(cls));
    m.recall = ratio(c.tp(cls), c.tp(cls) + c.fn(cls));
    m.f1 = harmonic(m.precision, m.recall);
    return m;
}

FoldMetrics compute_metrics(std::span<const int> predictions, std::span<const int> truths, Averaging averaging) {
    const Confusion c = confusion(predictions, truths);
    FoldMetrics m;
    m.accuracy = ratio(c.tp(0) + c.tp(1), c.total());
    switch (averaging) {
    case Averaging::macro: {
        const ClassMetrics a = class_metrics(c, 0);
        const ClassMetrics b = class_metrics(c, 1);
        m.precision = (a.precision + b.precision) / 2.0;
        m.recall = (a.recall + b.recall) / 2.0;
        m.f1 = (a.f1 + b.f1) / 2.0;
        break;
    }
    case Averaging::micro: {
        // Pooled over both classes every prediction is a TP or an FP, so all
        // three equal accuracy for two classes.
        const std::size_t tp = c.tp(0) + c.tp(1);
        m.precision = ratio(tp, tp + c.fp(0) + c.fp(1));
        m.recall = ratio(tp, tp + c.fn(0) + c.fn(1));
        m.f1 = harmonic(m.precision, m.recall);
        break;
    }
    case Averaging::positive: {
        const ClassMetrics b = class_metrics(c, 1);
        m.precision = b.precision;
        m.recall = b.recall;
        m.f1 = b.f1;
        break;
    }
    }
    return m;
}

std::vector<FoldSplit> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    if (by_class.empty()) throw std::invalid_argument("stratified_kfold: empty dataset");
    if (labels.size() < k) {
        throw std::invalid_argument("stratified_kfold: " + std::to_string(labels.size()) + " subjects cannot fill k = " +
                                    std::to_string(k) + " folds");
    }
    // Two members guarantee every training split still sees the class.
    for (const auto& [label, members] : by_class) {
        if (members.size() < 2) {
            throw std::invalid_argument("stratified_kfold: class " + std::to_string(label) + " has " +
                                        std::to_string(members.size()) + " member; at least 2 are needed");
        }
    }
    SeededRng rng(seed);
    std::vector<std::size_t> fold_of(labels.size());
    std::size_t counter = 0;
    for (auto& [label, members] : by_class) {
        rng.shuffle(members);
        for (auto i : members) fold_of[i] = counter++ % k;
    }
    std::vector<FoldSplit> folds(k);
    for (std::size_t f = 0; f < k; ++f) folds[f].fold = f;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
    }
    return folds;
}

FoldSplit stratified_holdout(std::span<const int> labels, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("stratified_holdout: fraction must lie in [0, 1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    SeededRng rng(seed);
    FoldSplit split;
    for (auto& [label, members] : by_class) {
        rng.shuffle(members);
        const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        if (fraction > 0.0 && held == 0) {
            throw std::invalid_argument("stratified_holdout: class " + std::to_string(label) + " has too few members (" +
                                        std::to_string(members.size()) + ") to hold any out");
        }
        if (held >= members.size()) {
            throw std::invalid_argument("stratified_holdout: class " + std::to_string(label) + " would keep no training members");
        }
        split.test.insert(split.test.end(), members.begin(), members.begin() + static_cast<long>(held));
        split.train.insert(split.train.end(), members.begin() + static_cast<long>(held), members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

void MetricsReport::aggregate() {
    if (folds.empty()) throw std::invalid_argument("metrics report: no folds");
    for (auto field : {&FoldMetrics::accuracy, &FoldMetrics::precision, &FoldMetrics::recall, &FoldMetrics::f1}) {
        double sum = 0.0;
        for (const auto& f : folds) sum += f.*field;
        const double mu = sum / static_cast<double>(folds.size());
        double sq = 0.0;
        for (const auto& f : folds) sq += (f.*field - mu) * (f.*field - mu);
        mean.*field = mu;
        stddev.*field = std::sqrt(sq / static_cast<double>(folds.size()));
    }
}

namespace {

nlohmann::ordered_json metrics_json(const FoldMetrics& m) {
    nlohmann::ordered_json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    return j;
}

} // namespace

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["averaging"] = averaging;
    j["k"] = folds.size();
    j["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : folds) j["folds"].push_back(metrics_json(f));
    j["mean"] = metrics_json(mean);
    j["std"] = metrics_json(stddev);
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_table(std::string_view title) const {
    char line[256];
    std::string out;
    std::snprintf(line, sizeof line, "%-12s %16s %16s %16s %16s\n", "Method", "Acc", "Prec", "Recall", "F1");
    out += line;
    auto cell = [](double mu, double sd) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * mu, 100.0 * sd);
        return std::string(buf);
    };
    // "±" is two bytes in UTF-8; widen the fields so columns still line up.
    std::snprintf(line, sizeof line, "%-12.12s %17s %17s %17s %17s\n", std::string(title).c_str(),
                  cell(mean.accuracy, stddev.accuracy).c_str(), cell(mean.precision, stddev.precision).c_str(),
                  cell(mean.recall, stddev.recall).c_str(), cell(mean.f1, stddev.f1).c_str());
    out += line;
    return out;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
    Dataset out;
    for (auto i : indices) {
        if (i >= data.size()) throw std::out_of_range("subset: index " + std::to_string(i) + " out of range");
        out.inputs.push_back(data.inputs[i]);
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

MetricsReport cross_validate(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                             const CVConfig& cv, std::uint64_t seed, const FoldCallback& on_fold) {
    data.check();
    const auto splits = stratified_kfold(data.labels, cv.folds, derive_seed(seed, 0x666f6c6473ULL));
    MetricsReport report;
    report.averaging = std::string(averaging_name(cv.averaging));
    for (const auto& split : splits) {
        try {
            SeededRng init_rng(derive_seed(seed, 0x696e6974ULL, split.fold));
            Model m = build_model(model_cfg, init_rng);
            TrainConfig tc = train_cfg;
            tc.seed = derive_seed(seed, 0x747261696eULL, split.fold);
            const Dataset train_set = subset(data, split.train);
            const Dataset test_set = subset(data, split.test);
            TrainResult result = train(std::move(m), train_set, nullptr, tc);
            const Evaluation ev = evaluate(result.model, test_set, tc.workers);
            report.folds.push_back(compute_metrics(ev.predictions, test_set.labels, cv.averaging));
            if (on_fold) on_fold(split.fold, report.folds.back());
        } catch (const std::exception& e) {
            throw std::runtime_error("fold " + std::to_string(split.fold) + ": " + e.what());
        }
    }
    report.aggregate();
    return report;
}

Dataset load_dataset(const Manifest& manifest) {
    Dataset d;
    for (const auto& r : manifest.records) {
        d.inputs.push_back(load_features(manifest.resolve(r)));
        d.labels.push_back(r.label);
    }
    return d;
}

bool Ellipsoid::contains(double d, double h, double w) const {
    const double a = (d - center[0]) / radii[0];
    const double b = (h - center[1]) / radii[1];
    const double c = (w - center[2]) / radii[2];
    return a * a + b * b + c * c <= 1.0;
}

std::array<Ellipsoid, 2> SyntheticSpec::rois() const {
    auto resolve = [&](const std::array<double, 3>& center) {
        Ellipsoid e{};
        for (std::size_t a = 0; a < 3; ++a) {
            const double extent = static_cast<double>(shape[a]);
            e.center[a] = center[a] * (extent - 1.0);
            e.radii[a] = roi_radii[a] * extent;
        }
        return e;
    };
    return {resolve(roi_a_center), resolve(roi_b_center)};
}

void SyntheticSpec::validate() const {
    if (per_class == 0) throw std::invalid_argument("synthetic: per_class must be >= 1");
    for (auto e : shape) {
        if (e == 0) throw std::invalid_argument("synthetic: volume extents must be >= 1");
    }
    if (!(delta >= 0.0)) throw std::invalid_argument("synthetic: delta must be >= 0");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("synthetic: noise_std must be >= 0");
    for (const auto& e : rois()) {
        for (std::size_t a = 0; a < 3; ++a) {
            if (!(e.radii[a] > 0.0) || e.center[a] - e.radii[a] < 0.0 ||
                e.center[a] + e.radii[a] > static_cast<double>(shape[a] - 1)) {
                throw std::invalid_argument("synthetic: ROI does not lie within the volume along axis " +
                                            std::to_string(a));
            }
        }
    }
}

Tensor roi_mask(const SyntheticSpec& spec) {
    const auto rois = spec.rois();
    Tensor mask(Shape{spec.shape[0], spec.shape[1], spec.shape[2]});
    std::size_t i = 0;
    for (std::size_t d = 0; d < spec.shape[0]; ++d) {
        for (std::size_t h = 0; h < spec.shape[1]; ++h) {
            for (std::size_t w = 0; w < spec.shape[2]; ++w, ++i) {
                const double fd = static_cast<double>(d), fh = static_cast<double>(h), fw = static_cast<double>(w);
                if (rois[0].contains(fd, fh, fw) || rois[1].contains(fd, fh, fw)) mask[i] = 1;
            }
        }
    }
    return mask;
}

int synthetic_label(const SyntheticSpec& spec, std::size_t subject) {
    if (subject >= 2 * spec.per_class) throw std::out_of_range("synthetic: subject index out of range");
    return subject < spec.per_class ? 0 : 1;
}

Tensor synthetic_volume(const SyntheticSpec& spec, std::size_t subject) {
    spec.validate();
    const int label = synthetic_label(spec, subject);
    const Tensor mask = roi_mask(spec);
    const double roi_level = spec.roi_elevation - (label == 1 ? spec.delta : 0.0);
    SeededRng rng(derive_seed(spec.seed, 0x7375626a656374ULL, subject));
    Tensor v(Shape{spec.shape[0], spec.shape[1], spec.shape[2], 1});
    for (std::size_t i = 0; i < v.size(); ++i) {
        double value = spec.base_intensity + (mask[i] > 0 ? roi_level : 0.0);
        if (spec.noise_std > 0.0) value += rng.normal(0.0, spec.noise_std);
        v[i] = static_cast<real>(value);
    }
    return v;
}

Dataset synthetic_dataset(const SyntheticSpec& spec) {
    Dataset d;
    for (std::size_t s = 0; s < 2 * spec.per_class; ++s) {
        d.inputs.push_back(synthetic_volume(spec, s));
        d.labels.push_back(synthetic_label(spec, s));
    }
    return d;
}

std::filesystem::path gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
    spec.validate();
    std::filesystem::create_directories(dir);
    Manifest manifest;
    manifest.base_dir = dir;
    for (std::size_t s = 0; s < 2 * spec.per_class; ++s) {
        char name[32];
        std::snprintf(name, sizeof name, "sub-%04zu", s);
        const std::string file = std::string(name) + ".vtf";
        vtf_write(dir / file, synthetic_volume(spec, s));
        manifest.records.push_back({file, synthetic_label(spec, s), name});
    }
    const auto path = dir / "manifest.jsonl";
    write_manifest(path, manifest);
    return path;
}

} // namespace ssanet
