#include "ssanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ssanet/rng.hpp"

namespace ssanet {

namespace {

double evaluate(const ScalarComputation& f) {
    Tape tape(false);
    const Var out = f(tape);
    if (out.value().size() != 1) {
        throw std::invalid_argument("finite_diff_check: computation is not scalar-valued, got shape " +
                                    out.shape().str());
    }
    return out.value()[0];
}

double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += static_cast<double>(t[i]) * t[i];
    return std::sqrt(s);
}

// Denominator taken from the perturbed values actually stored.
double central_difference(const ScalarComputation& f, Tensor& t, std::size_t i, double epsilon) {
    const real original = t[i];
    const real up = static_cast<real>(original + epsilon);
    const real down = static_cast<real>(original - epsilon);
    t[i] = up;
    const double f_up = evaluate(f);
    t[i] = down;
    const double f_down = evaluate(f);
    t[i] = original;
    return (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
}

std::vector<std::size_t> probe_indices(std::size_t n, const GradCheckOptions& options, std::uint64_t tag) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_probes == 0 || n <= options.max_probes) return idx;
    SeededRng rng(derive_seed(options.seed, tag));
    rng.shuffle(idx);
    idx.resize(options.max_probes);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

GradCheckReport finite_diff_check(std::string op, const ScalarComputation& f, std::span<const CheckedTensor> params,
                                  const GradCheckOptions& options) {
    std::vector<Tensor> analytic;
    {
        Tape tape(true);
        const Var out = f(tape);
        if (out.value().size() != 1) {
            throw std::invalid_argument("finite_diff_check: computation is not scalar-valued, got shape " +
                                        out.shape().str());
        }
        tape.backward(out);
        for (const auto& p : params) analytic.push_back(tape.grad_of(*p.tensor));
    }

    double roundoff = 0.0;
    if (options.kink_guard) {
        roundoff = 8.0 * std::numeric_limits<real>::epsilon() * std::fabs(evaluate(f)) / options.epsilon;
    }

    GradCheckReport report;
    report.op = std::move(op);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& t = *params[k].tensor;
        const auto probes = probe_indices(t.size(), options, k);
        double diff2 = 0.0;
        double a2 = 0.0;
        double n2 = 0.0;
        std::size_t kinks = 0;
        // A probe whose two step sizes disagree by more than its even share of
        // the tolerance budget, and by more than evaluation round-off could
        // explain, is treated as straddling a kink.
        const double budget = std::max(options.tolerance * std::max(l2_norm(analytic[k]), 1e-8) /
                                           std::sqrt(static_cast<double>(std::max<std::size_t>(probes.size(), 1))),
                                       roundoff);
        for (std::size_t i : probes) {
            const double numeric = central_difference(f, t, i, options.epsilon);
            if (options.kink_guard) {
                const double half = central_difference(f, t, i, options.epsilon / 2);
                if (std::fabs(numeric - half) > budget) {
                    ++kinks;
                    continue;
                }
            }
            const double a = analytic[k][i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        ParamError err;
        err.name = params[k].name;
        err.analytic_norm = std::sqrt(a2);
        err.probes = probes.size();
        err.kinks = kinks;
        err.relative_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
        report.max_relative_error = std::max(report.max_relative_error, err.relative_error);
        report.per_param.push_back(std::move(err));
    }
    report.pass = report.max_relative_error <= options.tolerance;
    return report;
}

} // namespace ssanet
