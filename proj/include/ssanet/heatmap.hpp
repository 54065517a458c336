#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ssanet/tensor.hpp"

namespace ssanet {

// Trilinear resampling of a (D,H,W) map with corner voxels aligned, so a map
// already at the target size is returned unchanged.
Tensor trilinear_resample(const Tensor& map, const std::array<std::size_t, 3>& target);

// Binary PGM ("P5", maxval 255) of a rows x cols image with values in [0,1],
// each stored as round(255 v).
std::vector<std::uint8_t> pgm_encode(const Tensor& image);

struct HeatmapFiles {
    std::filesystem::path sagittal; // fixed index on axis 0
    std::filesystem::path coronal;  // axis 1
    std::filesystem::path axial;    // axis 2
    std::filesystem::path volume;   // full resampled map, VTF
};

// Resamples `map` to `target`, then writes the three mid-plane slices and the
// resampled volume under `dir`. Values outside [0,1] are rejected.
HeatmapFiles export_heatmap_slices(const Tensor& map, const std::array<std::size_t, 3>& target,
                                   const std::filesystem::path& dir);

// Mid-plane slice of a (D,H,W) tensor orthogonal to `axis`, as a 2-axis tensor.
Tensor mid_slice(const Tensor& volume, std::size_t axis);

} // namespace ssanet
