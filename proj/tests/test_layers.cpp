#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ssanet/layers.hpp"

using namespace ssanet;

namespace {

Tensor vec(std::initializer_list<real> v) { return Tensor(Shape{v.size()}, std::vector<real>(v)); }

Tensor scalar_volume(double v) { return Tensor(Shape{1, 1, 1, 1}, std::vector<real>{static_cast<real>(v)}); }

// Writes an oracle's weights into k=1, one-channel ConvLSTM params.
ConvLSTMParams scalar_params(const oracle::ScalarLSTM& o, Peephole mode) {
    ConvLSTMParams p = ConvLSTMParams::zeros(1, 1, 1, mode);
    auto set = [](Tensor& t, double v) { t.data()[0] = static_cast<real>(v); };
    set(p.wxi, o.wxi), set(p.wxf, o.wxf), set(p.wxc, o.wxc), set(p.wxo, o.wxo);
    set(p.whi, o.whi), set(p.whf, o.whf), set(p.whc, o.whc), set(p.who, o.who);
    if (mode != Peephole::none) set(p.wci, o.wci), set(p.wcf, o.wcf), set(p.wco, o.wco);
    set(p.bi, o.bi), set(p.bf, o.bf), set(p.bc, o.bc), set(p.bo, o.bo);
    return p;
}

oracle::ScalarLSTM sample_oracle() {
    return {0.7, -0.4, 1.1, 0.3, 0.5, -0.8, 0.9, 0.2, 0.35, -0.6, 0.45, 0.1, 0.4, -0.2, 0.05};
}

void randomize(ConvLSTMParams& p, SeededRng& rng, double bound) {
    for (auto [name, t] : p.tensors()) {
        for (auto& v : t->data()) v = static_cast<real>(rng.uniform(-bound, bound));
    }
}

} // namespace

// ---------------------------------------------------------------------------
// dense

TEST(Dense, IdentityWeightsLinear) {
    DenseParams p = DenseParams::zeros(3, 3);
    for (std::size_t i = 0; i < 3; ++i) p.weight.at({i, i}) = 1.0f;
    const Tensor x = vec({0.5f, -2.0f, 3.0f});
    EXPECT_EQ(dense_forward(x, p, Activation::linear).values(), x.values());
}

TEST(Dense, HandExampleWithRelu) {
    DenseParams p{Tensor(Shape{2, 2}, std::vector<real>{1, 0, 0, 1}), vec({1, 1})};
    EXPECT_EQ(dense_forward(vec({1, 2}), p, Activation::relu).values(), (std::vector<real>{2, 3}));
}

TEST(Dense, ZeroInputGeluIsZero) {
    SeededRng rng(1);
    DenseParams p{oracle::random_tensor(Shape{4, 3}, rng), Tensor(Shape{3})};
    EXPECT_EQ(dense_forward(Tensor(Shape{4}), p, Activation::gelu).values(), std::vector<real>(3, 0.0f));
}

TEST(Dense, RejectsLengthMismatch) {
    EXPECT_THROW(dense_forward(Tensor(Shape{3}), DenseParams::zeros(2, 2), Activation::linear), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// dropout

TEST(Dropout, RateZeroIsIdentityInBothModes) {
    SeededRng rng(2), drop(3);
    const Tensor x = oracle::random_tensor(Shape{5, 7}, rng);
    EXPECT_EQ(dropout(x, 0.0, Mode::train, drop).values(), x.values());
    EXPECT_EQ(dropout(x, 0.0, Mode::infer, drop).values(), x.values());
}

TEST(Dropout, InferIsIdentity) {
    SeededRng rng(4), drop(5);
    const Tensor x = oracle::random_tensor(Shape{100}, rng);
    EXPECT_EQ(dropout(x, 0.5, Mode::infer, drop).values(), x.values());
}

TEST(Dropout, TrainStatistics) {
    SeededRng drop(6);
    const Tensor x(Shape{100000}, 1.0f);
    const Tensor y = dropout(x, 0.5, Mode::train, drop);
    std::size_t kept = 0;
    double mean = 0;
    for (auto v : y.values()) {
        ASSERT_TRUE(v == 0.0f || v == 2.0f);
        kept += v != 0.0f;
        mean += v;
    }
    mean /= static_cast<double>(y.size());
    EXPECT_NEAR(static_cast<double>(kept) / y.size(), 0.5, 0.01);
    EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(Dropout, RejectsRateOfOne) {
    SeededRng drop(7);
    EXPECT_THROW(dropout(Tensor(Shape{3}), 1.0, Mode::train, drop), std::invalid_argument);
    EXPECT_THROW(dropout(Tensor(Shape{3}), -0.1, Mode::infer, drop), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// ConvLSTM

TEST(ConvLSTM, ZeroParamsGiveHalfGatesAndZeroState) {
    for (auto mode : {Peephole::conv, Peephole::hadamard, Peephole::none}) {
        const ConvLSTMParams p = ConvLSTMParams::zeros(3, 4, 3, mode);
        SeededRng rng(8);
        const Tensor x = oracle::random_tensor(Shape{3, 2, 4, 3}, rng);
        ConvLSTMGates g;
        const ConvLSTMState s = convlstm_step(x, ConvLSTMState::zeros({3, 2, 4, 3}, 4), p, &g);
        for (const Tensor* t : {&g.input, &g.forget, &g.output}) {
            for (auto v : t->values()) EXPECT_EQ(v, 0.5f);
        }
        for (auto v : s.cell.values()) EXPECT_EQ(v, 0.0f);
        for (auto v : s.hidden.values()) EXPECT_EQ(v, 0.0f);
    }
}

TEST(ConvLSTM, ScalarStepMatchesEquations) {
    const auto o = sample_oracle();
    for (auto mode : {Peephole::conv, Peephole::hadamard, Peephole::none}) {
        auto ref = o;
        ref.peephole = mode != Peephole::none;
        const ConvLSTMParams p = scalar_params(ref, mode);
        // Nonzero previous state so every term is exercised.
        oracle::ScalarLSTM::State prev;
        prev.h = -0.3;
        prev.c = 0.8;
        const auto want = ref.step(0.9, prev);
        ConvLSTMGates g;
        const ConvLSTMState got =
            convlstm_step(scalar_volume(0.9), {scalar_volume(prev.h), scalar_volume(prev.c)}, p, &g);
        EXPECT_NEAR(g.input[0], want.i, 1e-6);
        EXPECT_NEAR(g.forget[0], want.f, 1e-6);
        EXPECT_NEAR(g.output[0], want.o, 1e-6);
        EXPECT_NEAR(got.cell[0], want.c, 1e-6);
        EXPECT_NEAR(got.hidden[0], want.h, 1e-6);
    }
}

TEST(ConvLSTM, ScalarSequenceMatchesIteratedEquations) {
    const auto o = sample_oracle();
    const double xs[] = {0.9, -0.5, 1.3};
    for (auto mode : {Peephole::conv, Peephole::hadamard, Peephole::none}) {
        auto ref = o;
        ref.peephole = mode != Peephole::none;
        const ConvLSTMParams p = scalar_params(ref, mode);
        oracle::ScalarLSTM::State s;
        std::vector<Tensor> seq;
        for (double x : xs) {
            s = ref.step(x, s);
            seq.push_back(scalar_volume(x));
        }
        EXPECT_NEAR(convlstm_sequence(seq, p)[0], s.h, 1e-6) << peephole_name(mode);
    }
}

TEST(ConvLSTM, SaturatedForgetGateDropsPreviousCell) {
    SeededRng rng(9);
    ConvLSTMParams p = ConvLSTMParams::zeros(2, 3, 3, Peephole::conv);
    randomize(p, rng, 0.3);
    p.bf.fill(-50.0f);
    const Tensor x = oracle::random_tensor(Shape{2, 3, 2, 2}, rng);
    const Tensor h = oracle::random_tensor(Shape{2, 3, 2, 3}, rng);
    // The peephole makes F depend on C', so hold the input-gate and output paths
    // fixed by zeroing the cell peepholes and compare two different C'.
    p.wci.fill(0.0f);
    p.wcf.fill(0.0f);
    p.wco.fill(0.0f);
    const Tensor c1 = oracle::random_tensor(Shape{2, 3, 2, 3}, rng, -3, 3);
    const Tensor c2 = oracle::random_tensor(Shape{2, 3, 2, 3}, rng, -3, 3);
    const auto a = convlstm_step(x, {h, c1}, p);
    const auto b = convlstm_step(x, {h, c2}, p);
    for (std::size_t i = 0; i < a.cell.size(); ++i) EXPECT_NEAR(a.cell[i], b.cell[i], 1e-6);
}

TEST(ConvLSTM, SaturatedForgetGateWithPeepholes) {
    // With b_f = -50 the forget gate stays saturated for any bounded peephole
    // input, so C_t still loses its dependence on C_{t-1}.
    SeededRng rng(10);
    ConvLSTMParams p = ConvLSTMParams::zeros(1, 2, 3, Peephole::hadamard);
    randomize(p, rng, 0.3);
    p.bf.fill(-50.0f);
    const Tensor x = oracle::random_tensor(Shape{2, 2, 2, 1}, rng);
    const Tensor h(Shape{2, 2, 2, 2});
    p.wci.fill(0.0f);
    p.wco.fill(0.0f);
    const auto a = convlstm_step(x, {h, oracle::random_tensor(Shape{2, 2, 2, 2}, rng)}, p);
    const auto b = convlstm_step(x, {h, oracle::random_tensor(Shape{2, 2, 2, 2}, rng)}, p);
    for (std::size_t i = 0; i < a.cell.size(); ++i) EXPECT_NEAR(a.cell[i], b.cell[i], 1e-6);
}

TEST(ConvLSTM, LengthOneSequenceIsOneStep) {
    SeededRng rng(11);
    ConvLSTMParams p = ConvLSTMParams::zeros(2, 3, 3);
    randomize(p, rng, 0.4);
    const Tensor x = oracle::random_tensor(Shape{3, 3, 2, 2}, rng);
    const auto step = convlstm_step(x, ConvLSTMState::zeros({3, 3, 2, 2}, 3), p);
    const std::vector<Tensor> seq{x};
    EXPECT_EQ(convlstm_sequence(seq, p).values(), step.hidden.values());
}

TEST(ConvLSTM, ZeroParamsGiveZeroSequenceOutput) {
    SeededRng rng(12);
    const ConvLSTMParams p = ConvLSTMParams::zeros(2, 3, 3);
    std::vector<Tensor> seq;
    for (int i = 0; i < 4; ++i) seq.push_back(oracle::random_tensor(Shape{2, 2, 2, 2}, rng));
    const Tensor out = convlstm_sequence(seq, p);
    for (auto v : out.values()) EXPECT_EQ(v, 0.0f);
}

TEST(ConvLSTM, GateAndStateBounds) {
    SeededRng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const auto mode = static_cast<Peephole>(trial % 3);
        ConvLSTMParams p = ConvLSTMParams::zeros(2, 3, 3, mode);
        // Small enough that float sigmoid does not round to exactly 0 or 1.
        randomize(p, rng, 0.25);
        const Tensor x = oracle::random_tensor(Shape{3, 2, 3, 2}, rng, -2, 2);
        const Tensor h = oracle::random_tensor(Shape{3, 2, 3, 3}, rng);
        const Tensor c = oracle::random_tensor(Shape{3, 2, 3, 3}, rng, -3, 3);
        ConvLSTMGates g;
        const auto s = convlstm_step(x, {h, c}, p, &g);
        for (const Tensor* t : {&g.input, &g.forget, &g.output}) {
            for (auto v : t->values()) {
                EXPECT_GT(v, 0.0f);
                EXPECT_LT(v, 1.0f);
            }
        }
        for (std::size_t i = 0; i < c.size(); ++i) {
            EXPECT_LE(std::fabs(s.cell[i]), std::fabs(c[i]) + 1.0f + 1e-6f);
            EXPECT_GT(s.hidden[i], -1.0f);
            EXPECT_LT(s.hidden[i], 1.0f);
        }
    }
}

TEST(ConvLSTM, RejectsBadSequences) {
    const ConvLSTMParams p = ConvLSTMParams::zeros(1, 2, 3);
    EXPECT_THROW(convlstm_sequence(std::vector<Tensor>{}, p), std::invalid_argument);
    const std::vector<Tensor> mixed{Tensor(Shape{2, 2, 2, 1}), Tensor(Shape{2, 3, 2, 1})};
    EXPECT_THROW(convlstm_sequence(mixed, p), std::invalid_argument);
    EXPECT_THROW(convlstm_step(Tensor(Shape{2, 2, 2, 1}), ConvLSTMState::zeros({3, 2, 2, 1}, 2), p),
                 std::invalid_argument);
    EXPECT_THROW(convlstm_step(Tensor(Shape{2, 2, 2, 3}), ConvLSTMState::zeros({2, 2, 2, 1}, 2), p),
                 std::invalid_argument);
}

TEST(ConvLSTM, TapeAndTensorPathsAgree) {
    SeededRng rng(14);
    ConvLSTMParams p = ConvLSTMParams::zeros(2, 2, 3, Peephole::conv);
    randomize(p, rng, 0.5);
    std::vector<Tensor> seq;
    for (int i = 0; i < 3; ++i) seq.push_back(oracle::random_tensor(Shape{2, 3, 2, 2}, rng));
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& t : seq) vars.push_back(tape.constant(t));
    const Tensor a = convlstm_sequence(seq, p);
    const Tensor b = convlstm_sequence(vars, p).value();
    EXPECT_EQ(a.values(), b.values());
}

// ---------------------------------------------------------------------------
// regularization

TEST(Regularization, Examples) {
    RegularizationConfig none{{PenaltyKind::l2, 0.0, 0.0}, {PenaltyKind::l1l2, 0.0, 0.0}};
    std::vector<DenseParams> layers{DenseParams{Tensor(Shape{1, 1}, 2.0f), Tensor(Shape{1}, -3.0f)}};
    EXPECT_EQ(regularization_penalty(layers, none), 0.0);

    RegularizationConfig weights_only{{PenaltyKind::l2, 0.0, 0.005}, {PenaltyKind::l1l2, 0.0, 0.0}};
    std::vector<DenseParams> w2{DenseParams{Tensor(Shape{1, 1}, 2.0f), Tensor(Shape{1})}};
    EXPECT_NEAR(regularization_penalty(w2, weights_only), 0.02, 1e-12);

    RegularizationConfig biases_only{{PenaltyKind::l2, 0.0, 0.0}, {PenaltyKind::l1l2, 0.005, 0.005}};
    std::vector<DenseParams> b3{DenseParams{Tensor(Shape{1, 1}), Tensor(Shape{1}, -3.0f)}};
    EXPECT_NEAR(regularization_penalty(b3, biases_only), 0.06, 1e-12);
}

TEST(Regularization, DefaultsFollowSelectedValues) {
    const RegularizationConfig d;
    EXPECT_EQ(d.weights.kind, PenaltyKind::l2);
    EXPECT_EQ(d.weights.l2_rate, 0.005);
    EXPECT_EQ(d.biases.kind, PenaltyKind::l1l2);
    EXPECT_EQ(d.biases.l1_rate, 0.005);
    EXPECT_EQ(d.biases.l2_rate, 0.005);
}

TEST(Regularization, NonnegativeAndZeroOnlyAtZero) {
    SeededRng rng(15);
    const RegularizationConfig cfg;
    std::vector<DenseParams> layers{DenseParams::zeros(3, 4), DenseParams::zeros(4, 2)};
    EXPECT_EQ(regularization_penalty(layers, cfg), 0.0);
    for (int t = 0; t < 20; ++t) {
        auto& l = layers[t % 2];
        Tensor& target = t % 4 < 2 ? l.weight : l.bias;
        target[rng.below(target.size())] = static_cast<real>(rng.uniform(-1, 1));
        EXPECT_GT(regularization_penalty(layers, cfg), 0.0);
    }
}

TEST(Regularization, TapePenaltyMatchesValueAndGradient) {
    SeededRng rng(16);
    RegularizationConfig cfg{{PenaltyKind::l1l2, 0.01, 0.02}, {PenaltyKind::l1, 0.03, 0.0}};
    std::vector<DenseParams> layers{DenseParams{oracle::random_tensor(Shape{3, 2}, rng), oracle::random_tensor(Shape{2}, rng)}};
    Tape tape;
    const Var pen = regularization_penalty(tape, layers, cfg);
    EXPECT_NEAR(pen.value()[0], regularization_penalty(layers, cfg), 1e-6);
    tape.backward(pen);
    const Tensor gw = tape.grad_of(layers[0].weight);
    for (std::size_t i = 0; i < gw.size(); ++i) {
        const double w = layers[0].weight[i];
        EXPECT_NEAR(gw[i], 0.01 * (w > 0 ? 1 : -1) + 0.04 * w, 1e-6);
    }
    const Tensor gb = tape.grad_of(layers[0].bias);
    for (std::size_t i = 0; i < gb.size(); ++i) EXPECT_NEAR(gb[i], 0.03 * (layers[0].bias[i] > 0 ? 1 : -1), 1e-6);
}
