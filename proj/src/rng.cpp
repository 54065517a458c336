#include "ssanet/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ssanet {

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double SeededRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
}

std::uint64_t SeededRng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = 0;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
    return splitmix64(splitmix64(parent) ^ (tag * 0xd1342543de82ef95ULL + 1));
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag_a, std::uint64_t tag_b) {
    return derive_seed(derive_seed(parent, tag_a), tag_b);
}

} // namespace ssanet
