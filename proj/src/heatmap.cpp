#include "ssanet/heatmap.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ssanet/io.hpp"

namespace ssanet {

namespace {

void check_map(const Tensor& map, const char* what) {
    if (map.rank() != 3) throw std::invalid_argument(std::string(what) + ": expected a (D,H,W) map, got " + map.shape().str());
}

struct Tap {
    std::size_t lo, hi;
    double frac;
};

Tap tap(std::size_t i, std::size_t src, std::size_t dst) {
    if (src == 1 || dst == 1) return {0, 0, 0.0};
    const double pos = static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), src - 1);
    const std::size_t hi = std::min(lo + 1, src - 1);
    return {lo, hi, pos - static_cast<double>(lo)};
}

} // namespace

Tensor trilinear_resample(const Tensor& map, const std::array<std::size_t, 3>& target) {
    check_map(map, "trilinear_resample");
    const std::size_t D = map.extent(0), H = map.extent(1), W = map.extent(2);
    Tensor out(Shape{target[0], target[1], target[2]});
    auto at = [&](std::size_t d, std::size_t h, std::size_t w) {
        return static_cast<double>(map[(d * H + h) * W + w]);
    };
    std::size_t o = 0;
    for (std::size_t i = 0; i < target[0]; ++i) {
        const Tap a = tap(i, D, target[0]);
        for (std::size_t j = 0; j < target[1]; ++j) {
            const Tap b = tap(j, H, target[1]);
            for (std::size_t k = 0; k < target[2]; ++k, ++o) {
                const Tap c = tap(k, W, target[2]);
                auto lerp_w = [&](std::size_t d, std::size_t h) {
                    return at(d, h, c.lo) * (1.0 - c.frac) + at(d, h, c.hi) * c.frac;
                };
                auto lerp_hw = [&](std::size_t d) {
                    return lerp_w(d, b.lo) * (1.0 - b.frac) + lerp_w(d, b.hi) * b.frac;
                };
                out[o] = static_cast<real>(lerp_hw(a.lo) * (1.0 - a.frac) + lerp_hw(a.hi) * a.frac);
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> pgm_encode(const Tensor& image) {
    if (image.rank() != 2) throw std::invalid_argument("pgm_encode: expected a 2-axis image, got " + image.shape().str());
    const std::string header =
        "P5\n" + std::to_string(image.extent(1)) + " " + std::to_string(image.extent(0)) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (real v : image.data()) {
        if (!(v >= 0 && v <= 1)) throw std::invalid_argument("pgm_encode: value " + std::to_string(v) + " outside [0,1]");
        out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(v))));
    }
    return out;
}

Tensor mid_slice(const Tensor& volume, std::size_t axis) {
    check_map(volume, "mid_slice");
    if (axis > 2) throw std::invalid_argument("mid_slice: axis must be 0, 1 or 2");
    const std::size_t D = volume.extent(0), H = volume.extent(1), W = volume.extent(2);
    const std::size_t fixed = volume.extent(axis) / 2;
    const std::size_t rows = axis == 0 ? H : D;
    const std::size_t cols = axis == 2 ? H : W;
    Tensor out(Shape{rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t d = r, h = c, w = c;
            if (axis == 0) { d = fixed; h = r; }
            if (axis == 1) { h = fixed; }
            if (axis == 2) { h = c; w = fixed; }
            out[r * cols + c] = volume[(d * H + h) * W + w];
        }
    }
    return out;
}

HeatmapFiles export_heatmap_slices(const Tensor& map, const std::array<std::size_t, 3>& target,
                                   const std::filesystem::path& dir) {
    check_map(map, "export_heatmap_slices");
    for (real v : map.data()) {
        if (!(v >= 0 && v <= 1)) {
            throw std::invalid_argument("export_heatmap_slices: map value " + std::to_string(v) +
                                        " outside [0,1]; normalize first");
        }
    }
    const Tensor full = trilinear_resample(map, target);
    HeatmapFiles files{dir / "sagittal.pgm", dir / "coronal.pgm", dir / "axial.pgm", dir / "heatmap.vtf"};
    write_file_atomic(files.sagittal, pgm_encode(mid_slice(full, 0)));
    write_file_atomic(files.coronal, pgm_encode(mid_slice(full, 1)));
    write_file_atomic(files.axial, pgm_encode(mid_slice(full, 2)));
    vtf_write(files.volume, full);
    return files;
}

} // namespace ssanet
