#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssanet/gradcheck.hpp"
#include "ssanet/model.hpp"

namespace ssanet {

// Finite-difference settings matched to the element type: epsilon and
// tolerance 1e-3 for 32-bit builds; epsilon 1e-4, tolerance 1e-6 and the kink
// guard for the 64-bit verification build.
GradCheckOptions default_gradcheck_options();

// Volume 8x8x8, two stem blocks ending at 4 channels, SSA with 4 inner
// channels, head widths 8 and 4.
ModelConfig miniature_model_config();

struct GradSuiteCase {
    std::string name;
    std::function<GradCheckReport(std::uint64_t seed, const GradCheckOptions&)> run;
};

// Every differentiable operation on randomized shapes no larger than (4,4,4,8).
std::vector<GradSuiteCase> gradient_suite();

struct GradSuiteResult {
    std::vector<GradCheckReport> reports; // one per (case, seed)
    double max_relative_error = 0.0;
    bool pass = true;
};

using GradReportCallback = std::function<void(const GradCheckReport&, std::uint64_t seed)>;

GradSuiteResult run_gradient_suite(std::size_t seeds, const GradCheckOptions& options,
                                   const GradReportCallback& on_report = {});

} // namespace ssanet
