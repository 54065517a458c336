#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ssanet/model.hpp"

namespace ssanet {

// -ln(max(probs[label], 1e-12))
double cross_entropy(std::span<const real> probs, int label);
// Mean of the per-sample data losses plus the penalty; an empty batch is rejected.
double total_loss(std::span<const double> sample_losses, double penalty);

// Index of the largest probability; ties go to the lower class.
int predicted_class(std::span<const real> probs);

// For rank >= 2, subtracts from each output slice (last axis) its mean over
// all other axes. Rank 0 and 1 tensors are returned unchanged.
Tensor centralize_gradient(const Tensor& g);
void centralize_gradient_inplace(Tensor& g);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool centralize = true;
};

struct OptimizerState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor> first;  // one per parameter, same shape
    std::vector<Tensor> second;

    static OptimizerState for_params(std::span<Tensor* const> params, const AdamConfig& config = {});
};

// Bias-corrected adaptive-moment update, gradients centralized first when enabled.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state);

struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<int> labels;

    std::size_t size() const { return inputs.size(); }
    void check() const;
};

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    AdamConfig optimizer;
    std::size_t workers = 1;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double loss = 0.0;     // sample-weighted mean of batch total losses, train mode
    double accuracy = 0.0; // train-mode predictions during the epoch
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    Model model;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Gradients of one batch: per-sample tapes, data loss scaled by 1/B, plus the
// head penalty. Returned in Model::parameters() order.
struct BatchGradients {
    std::vector<Tensor> grads;
    double data_loss = 0.0; // mean cross-entropy
    double penalty = 0.0;
    std::size_t correct = 0;
};

BatchGradients batch_gradients(const Model& m, const Dataset& data, std::span<const std::size_t> batch, Mode mode,
                               std::uint64_t dropout_seed, std::size_t workers);

TrainResult train(Model m, const Dataset& train_set, const Dataset* val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct Evaluation {
    std::vector<std::vector<real>> probabilities;
    std::vector<int> predictions;
    double loss = 0.0; // mean cross-entropy
    double accuracy = 0.0;
};

Evaluation evaluate(const Model& m, const Dataset& data, std::size_t workers = 1);

} // namespace ssanet
