#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace ssanet {

// Reproducible random source.
//
// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
// C++ standard. Everything derived from those bits is implemented here rather
// than with <random> distributions (which are implementation-defined):
//   uniform()  -> top 53 bits scaled to [0, 1)
//   below(n)   -> rejection sampling, no modulo bias
//   normal()   -> Marsaglia polar method, second variate cached
// The normal stream relies on std::log and std::sqrt; sqrt is exact under
// IEEE-754 and glibc's log is correctly rounded for doubles.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates; identical across platforms for a given seed.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Deterministic child seed for a (parent, tag...) tuple, via splitmix64 finalization.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag_a, std::uint64_t tag_b);

} // namespace ssanet
