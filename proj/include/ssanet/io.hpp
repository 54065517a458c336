#pragma once

// On-disk formats.
//
// VTF tensor file, all integers little-endian:
//   offset 0   "VTF1"                 magic
//   offset 4   u8  dtype              1 = float32
//   offset 5   u8  rank               0..5
//   offset 6   u64 extents[rank]
//   then       f32 payload[prod(extents)], row-major
//
// Manifest: JSON lines, one {"path": ..., "label": 0|1, "subject_id": ...}
// object per line; relative paths resolve against the manifest's directory.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ssanet/tensor.hpp"

namespace ssanet {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kVtfFloat32 = 1;

std::vector<std::uint8_t> vtf_encode(const Tensor& t);
Tensor vtf_decode(std::span<const std::uint8_t> bytes);

void vtf_write(const std::filesystem::path& path, const Tensor& t);
Tensor vtf_read(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

struct ManifestRecord {
    std::string path;
    int label = 0;
    std::string subject_id;
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestRecord> records;

    std::filesystem::path resolve(const ManifestRecord& r) const;
    std::vector<int> labels() const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

} // namespace ssanet
