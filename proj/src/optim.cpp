#include "ssanet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace ssanet {

double cross_entropy(std::span<const real> probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
        throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " out of range");
    }
    return -std::log(std::max(static_cast<double>(probs[static_cast<std::size_t>(label)]), 1e-12));
}

double total_loss(std::span<const double> sample_losses, double penalty) {
    if (sample_losses.empty()) throw std::invalid_argument("total_loss: empty batch");
    double sum = 0.0;
    for (double l : sample_losses) sum += l;
    return sum / static_cast<double>(sample_losses.size()) + penalty;
}

int predicted_class(std::span<const real> probs) {
    if (probs.empty()) throw std::invalid_argument("predicted_class: empty probability vector");
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

void centralize_gradient_inplace(Tensor& g) {
    if (g.rank() < 2) return;
    const std::size_t out = g.extent(g.rank() - 1);
    const std::size_t rows = g.size() / out;
    std::vector<double> mean(out, 0.0);
    auto data = g.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out; ++o) mean[o] += data[r * out + o];
    }
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
            data[r * out + o] = static_cast<real>(data[r * out + o] - mean[o]);
        }
    }
}

Tensor centralize_gradient(const Tensor& g) {
    Tensor out = g;
    centralize_gradient_inplace(out);
    return out;
}

OptimizerState OptimizerState::for_params(std::span<Tensor* const> params, const AdamConfig& config) {
    OptimizerState s;
    s.config = config;
    for (const Tensor* p : params) {
        s.first.push_back(Tensor::zeros_like(*p));
        s.second.push_back(Tensor::zeros_like(*p));
    }
    return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.first.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters, " +
                                    std::to_string(grads.size()) + " gradients, " +
                                    std::to_string(state.first.size()) + " moment slots");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first[i].shape()) {
            throw std::invalid_argument("adam_step: parameter " + std::to_string(i) + " has shape " +
                                        params[i]->shape().str() + " but gradient " + grads[i].shape().str());
        }
    }
    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor g = c.centralize ? centralize_gradient(grads[i]) : grads[i];
        auto p = params[i]->data();
        auto m = state.first[i].data();
        auto v = state.second[i].data();
        const auto gd = g.data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = gd[j];
            const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
            const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
            m[j] = static_cast<real>(mj);
            v[j] = static_cast<real>(vj);
            const double update = c.learning_rate * (mj / correct1) / (std::sqrt(vj / correct2) + c.epsilon);
            p[j] = static_cast<real>(p[j] - update);
        }
    }
}

void Dataset::check() const {
    if (inputs.size() != labels.size()) {
        throw std::invalid_argument("dataset: " + std::to_string(inputs.size()) + " inputs but " +
                                    std::to_string(labels.size()) + " labels");
    }
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("dataset: label " + std::to_string(l) + " is not 0 or 1");
    }
}

namespace {

// Splits [0, n) into `workers` contiguous chunks and runs fn(begin, end, chunk)
// on each; chunk 0 runs on the calling thread.
template <class F>
void run_chunked(std::size_t n, std::size_t workers, F&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        fn(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    auto guarded = [&](std::size_t b, std::size_t e, std::size_t w) {
        try {
            fn(b, e, w);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    for (std::size_t w = 1; w < workers; ++w) {
        threads.emplace_back(guarded, w * n / workers, (w + 1) * n / workers, w);
    }
    guarded(0, n / workers, 0);
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void add_into(Tensor& acc, const Tensor& g) {
    auto a = acc.data();
    const auto b = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

} // namespace

BatchGradients batch_gradients(const Model& m, const Dataset& data, std::span<const std::size_t> batch, Mode mode,
                               std::uint64_t dropout_seed, std::size_t workers) {
    if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
    const auto params = m.parameters();
    const real inv_batch = static_cast<real>(1.0 / static_cast<double>(batch.size()));

    struct Partial {
        std::vector<Tensor> grads;
        double loss = 0.0;
        std::size_t correct = 0;
    };
    const std::size_t chunks = std::max<std::size_t>(1, std::min(workers, batch.size()));
    std::vector<Partial> partials(chunks);

    run_chunked(batch.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
        Partial& part = partials[w];
        for (const auto& p : params) part.grads.push_back(Tensor::zeros_like(*p.tensor));
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t index = batch[k];
            Tape tape;
            SeededRng rng(derive_seed(dropout_seed, index));
            const Var probs = model_forward(tape.constant(data.inputs[index]), m, mode, rng);
            const int label = data.labels[index];
            part.loss += cross_entropy(probs.value().data(), label);
            if (predicted_class(probs.value().data()) == label) ++part.correct;
            tape.backward(scale(cross_entropy(probs, static_cast<std::size_t>(label)), inv_batch));
            for (std::size_t i = 0; i < params.size(); ++i) add_into(part.grads[i], tape.grad_of(*params[i].tensor));
        }
    });

    BatchGradients out;
    out.grads = std::move(partials[0].grads);
    for (std::size_t w = 0; w < chunks; ++w) {
        if (w > 0) {
            for (std::size_t i = 0; i < params.size(); ++i) add_into(out.grads[i], partials[w].grads[i]);
        }
        out.data_loss += partials[w].loss;
        out.correct += partials[w].correct;
    }
    out.data_loss /= static_cast<double>(batch.size());

    Tape tape;
    const Var penalty = regularization_penalty(tape, m.head, m.config.regularization);
    out.penalty = penalty.value()[0];
    if (tape.requires_grad(penalty)) {
        tape.backward(penalty);
        for (std::size_t i = 0; i < params.size(); ++i) add_into(out.grads[i], tape.grad_of(*params[i].tensor));
    }
    return out;
}

TrainResult train(Model m, const Dataset& train_set, const Dataset* val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    train_set.check();
    if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
    if (val_set) val_set->check();

    auto named = m.parameters();
    std::vector<Tensor*> params;
    for (auto& p : named) params.push_back(p.tensor);
    OptimizerState state = OptimizerState::for_params(params, cfg.optimizer);

    SeededRng shuffle_rng(derive_seed(cfg.seed, 0x73687566666c65ULL));
    const std::uint64_t dropout_root = derive_seed(cfg.seed, 0x64726f706f7574ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result{Model{}, {}};
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, end - start);
            const BatchGradients bg =
                batch_gradients(m, train_set, batch, Mode::train, derive_seed(dropout_root, epoch), cfg.workers);
            adam_step(params, bg.grads, state);
            loss_sum += (bg.data_loss + bg.penalty) * static_cast<double>(batch.size());
            correct += bg.correct;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(order.size());
        rec.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        if (val_set && val_set->size() > 0) {
            const Evaluation ev = evaluate(m, *val_set, cfg.workers);
            rec.val_loss = ev.loss;
            rec.val_accuracy = ev.accuracy;
        }
        result.history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    result.model = std::move(m);
    return result;
}

Evaluation evaluate(const Model& m, const Dataset& data, std::size_t workers) {
    data.check();
    Evaluation ev;
    ev.probabilities.resize(data.size());
    ev.predictions.resize(data.size());
    run_chunked(data.size(), workers, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) {
            const Tensor probs = model_predict(m, data.inputs[i]);
            ev.probabilities[i] = probs.values();
            ev.predictions[i] = predicted_class(probs.data());
        }
    });
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ev.loss += cross_entropy(ev.probabilities[i], data.labels[i]);
        if (ev.predictions[i] == data.labels[i]) ++correct;
    }
    if (data.size() > 0) {
        ev.loss /= static_cast<double>(data.size());
        ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    }
    return ev;
}

} // namespace ssanet
