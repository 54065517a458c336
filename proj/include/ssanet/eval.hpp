#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssanet/io.hpp"
#include "ssanet/optim.hpp"

namespace ssanet {

// ---------------------------------------------------------------------------
// Metrics

enum class Averaging { macro, micro, positive };

Averaging parse_averaging(std::string_view name);
std::string_view averaging_name(Averaging a);

struct Confusion {
    // counts[truth][prediction]
    std::array<std::array<std::size_t, 2>, 2> counts{};

    std::size_t total() const;
    std::size_t tp(int c) const { return counts[c][c]; }
    std::size_t fp(int c) const { return counts[1 - c][c]; }
    std::size_t fn(int c) const { return counts[c][1 - c]; }
};

Confusion confusion(std::span<const int> predictions, std::span<const int> truths);

struct FoldMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Per-class precision, recall and F1 with 0 for an empty denominator.
struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};
ClassMetrics class_metrics(const Confusion& c, int cls);

// macro: per-class values averaged over both classes (F1 is the mean of the
// per-class F1 scores); micro: pooled counts; positive: class 1 only.
FoldMetrics compute_metrics(std::span<const int> predictions, std::span<const int> truths,
                            Averaging averaging = Averaging::macro);

// ---------------------------------------------------------------------------
// Stratified k-fold

struct FoldSplit {
    std::size_t fold = 0;
    std::vector<std::size_t> train; // indices into the dataset, ascending
    std::vector<std::size_t> test;
};

// Each class (ascending label order) is shuffled with the seed, then dealt
// round-robin onto folds with one counter shared across classes. Needs at
// least k subjects and at least two members per class.
std::vector<FoldSplit> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

// Single split holding out round(fraction * n_c) members of every class.
FoldSplit stratified_holdout(std::span<const int> labels, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cross-validation

struct MetricsReport {
    std::string averaging = "macro";
    std::vector<FoldMetrics> folds;
    FoldMetrics mean;
    FoldMetrics stddev; // population

    void aggregate();
    std::string to_json() const;
    // Acc / Prec / Recall / F1 in percent, mean +- std.
    std::string to_table(std::string_view title) const;
};

struct CVConfig {
    std::size_t folds = 5;
    Averaging averaging = Averaging::macro;
};

using FoldCallback = std::function<void(std::size_t fold, const FoldMetrics&)>;

MetricsReport cross_validate(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                             const CVConfig& cv, std::uint64_t seed, const FoldCallback& on_fold = {});

Dataset load_dataset(const Manifest& manifest);
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Synthetic volumes

struct Ellipsoid {
    std::array<double, 3> center; // voxel coordinates (d, h, w)
    std::array<double, 3> radii;

    bool contains(double d, double h, double w) const;
};

struct SyntheticSpec {
    std::size_t per_class = 48;
    std::array<std::size_t, 3> shape{32, 36, 32};
    double base_intensity = 0.0;
    double roi_elevation = 1.0;
    double delta = 0.3; // class-1 decrement inside the ROIs; 0 gives a null control
    double noise_std = 0.5;
    // Fractions of the volume extents; resolved against `shape`.
    std::array<double, 3> roi_a_center{0.30, 0.68, 0.50};
    std::array<double, 3> roi_b_center{0.70, 0.32, 0.50};
    std::array<double, 3> roi_radii{0.15, 0.15, 0.15};
    std::uint64_t seed = 0;

    std::array<Ellipsoid, 2> rois() const;
    void validate() const;
};

// 1 inside either ROI, 0 elsewhere; shape (D,H,W).
Tensor roi_mask(const SyntheticSpec& spec);

// Subject i's (D,H,W,1) volume; subjects [0, per_class) are class 0.
Tensor synthetic_volume(const SyntheticSpec& spec, std::size_t subject);
int synthetic_label(const SyntheticSpec& spec, std::size_t subject);

Dataset synthetic_dataset(const SyntheticSpec& spec);

// Writes sub-XXXX.vtf files and manifest.jsonl under `dir`; returns the manifest path.
std::filesystem::path gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

} // namespace ssanet
