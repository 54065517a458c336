#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ssanet {

inline constexpr std::size_t kMaxRank = 5;

// Element type. Normal builds use 32-bit floats; the verification build of the
// library (SSANET_REAL_DOUBLE) swaps in 64-bit so gradients can be checked tightly.
#ifdef SSANET_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

// Extents of a dense row-major tensor. Rank 0 denotes a scalar holding one value.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> extents);
    explicit Shape(std::vector<std::size_t> extents);

    std::size_t rank() const { return extents_.size(); }
    std::size_t operator[](std::size_t axis) const { return extents_[axis]; }
    std::size_t numel() const;
    const std::vector<std::size_t>& extents() const { return extents_; }

    std::string str() const;

    bool operator==(const Shape& other) const = default;

private:
    void validate() const;

    std::vector<std::size_t> extents_;
};

class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, real fill = 0.0f);
    Tensor(Shape shape, std::vector<real> data);

    static Tensor scalar(real value);
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.rank(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }

    std::span<real> data() { return data_; }
    std::span<const real> data() const { return data_; }
    const std::vector<real>& values() const { return data_; }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }

    // Multi-index access; the index count must equal the rank.
    real& at(std::initializer_list<std::size_t> index);
    real at(std::initializer_list<std::size_t> index) const;

    Tensor reshaped(Shape shape) const;
    void fill(real value);
    bool all_finite() const;

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<real> data_;
};

// Spatial view of a channel-last volume (D,H,W,C).
struct VolumeDims {
    std::size_t depth = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t voxels() const { return depth * height * width; }
    bool same_spatial(const VolumeDims& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }
};

// Throws std::invalid_argument unless `t` has rank 4; `what` names the caller.
VolumeDims volume_dims(const Tensor& t, const char* what);

} // namespace ssanet
