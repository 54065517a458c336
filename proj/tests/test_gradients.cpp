#include <gtest/gtest.h>

#include <cstdio>

#include "ssanet/gradsuite.hpp"
#include "ssanet/rng.hpp"

// Compiled twice: against the 32-bit library (tolerance 1e-3) and against the
// 64-bit verification build (tolerance 1e-6, kink guard on).

namespace {

constexpr std::size_t kSeeds = 10;

std::vector<std::size_t> case_indices() {
    std::vector<std::size_t> out(ssanet::gradient_suite().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

class GradientSuite : public ::testing::TestWithParam<std::size_t> {};

std::string case_label(const ::testing::TestParamInfo<std::size_t>& info) {
    std::string name = ssanet::gradient_suite()[info.param].name;
    for (char& c : name) {
        const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
        if (!word) c = '_';
    }
    return name;
}

} // namespace

TEST_P(GradientSuite, AnalyticMatchesCentralDifferences) {
    const std::size_t c = GetParam();
    const auto cases = ssanet::gradient_suite();
    const ssanet::GradCheckOptions options = ssanet::default_gradcheck_options();
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        const ssanet::GradCheckReport r = cases[c].run(ssanet::derive_seed(options.seed, c, s), options);
        std::string detail;
        for (const auto& p : r.per_param) {
            char line[160];
            std::snprintf(line, sizeof line, "  %-20s rel %.3e  |a| %.3e  probes %zu  kinks %zu\n", p.name.c_str(),
                          p.relative_error, p.analytic_norm, p.probes, p.kinks);
            detail += line;
        }
        EXPECT_TRUE(r.pass) << r.op << " seed " << s << " max rel err " << r.max_relative_error << " > "
                            << options.tolerance << "\n"
                            << detail;
        EXPECT_LE(r.max_relative_error, options.tolerance);
    }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientSuite, ::testing::ValuesIn(case_indices()), case_label);
