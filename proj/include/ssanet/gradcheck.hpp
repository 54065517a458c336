#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ssanet/autodiff.hpp"

namespace ssanet {

struct GradCheckOptions {
    double epsilon = 1e-3;
    double tolerance = 1e-3;
    // Elements probed per tensor; 0 probes every element. Probed indices are
    // drawn from `seed` when a tensor is larger than the limit.
    std::size_t max_probes = 0;
    std::uint64_t seed = 0;
    // Piecewise-linear activations make f non-differentiable at isolated
    // points. With the guard on, each probe is also differenced at epsilon/2;
    // when the two estimates disagree by more than tolerance * |a| / sqrt(probes)
    // (|a| the analytic norm of the tensor) the probe straddles a
    // kink and is dropped (and counted) instead of compared. A smooth f gives
    // consistent estimates, so a wrong analytic gradient is still caught.
    bool kink_guard = false;
};

struct ParamError {
    std::string name;
    double relative_error = 0.0;
    double analytic_norm = 0.0;
    std::size_t probes = 0;
    std::size_t kinks = 0; // probes dropped by the kink guard
};

struct GradCheckReport {
    std::string op;
    double max_relative_error = 0.0;
    std::vector<ParamError> per_param;
    bool pass = false;
};

struct CheckedTensor {
    std::string name;
    Tensor* tensor;
};

// Scalar computation that binds its inputs with tape.param(...).
using ScalarComputation = std::function<Var(Tape&)>;

// Compares tape gradients with central differences
//     (f(t + e) - f(t - e)) / ((t + e) - (t - e))
// where the denominator is taken from the perturbed float values actually used.
// For each checked tensor the error is |a - n| / max(|a|, |n|, 1e-8) with |.|
// the Euclidean norm over the probed elements. Tensors are perturbed in place
// and restored before returning.
GradCheckReport finite_diff_check(std::string op, const ScalarComputation& f, std::span<const CheckedTensor> params,
                                  const GradCheckOptions& options = {});

} // namespace ssanet
