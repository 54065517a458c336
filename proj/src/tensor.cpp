#include "ssanet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssanet {

Shape::Shape(std::initializer_list<std::size_t> extents) : extents_(extents) { validate(); }

Shape::Shape(std::vector<std::size_t> extents) : extents_(std::move(extents)) { validate(); }

void Shape::validate() const {
    if (extents_.size() > kMaxRank) {
        throw std::invalid_argument("shape " + str() + " exceeds the maximum rank of 5");
    }
    for (auto e : extents_) {
        if (e == 0) throw std::invalid_argument("shape " + str() + " has a zero extent");
    }
}

std::size_t Shape::numel() const {
    std::size_t n = 1;
    for (auto e : extents_) n *= e;
    return n;
}

std::string Shape::str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < extents_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(extents_[i]);
    }
    return s + ")";
}

Tensor::Tensor() : data_(1, 0.0f) {}

Tensor::Tensor(Shape shape, real fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_.str());
    }
}

Tensor Tensor::scalar(real value) { return Tensor(Shape{}, std::vector<real>{value}); }

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.rank()) {
        throw std::invalid_argument("index rank " + std::to_string(index.size()) + " does not match shape " +
                                    shape_.str());
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) throw std::out_of_range("index out of range for shape " + shape_.str());
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

real& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

real Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.numel() != data_.size()) {
        throw std::invalid_argument("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(real value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](real v) { return std::isfinite(v); });
}

VolumeDims volume_dims(const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw std::invalid_argument(std::string(what) + ": expected a (D,H,W,C) tensor, got shape " +
                                    t.shape().str());
    }
    return {t.extent(0), t.extent(1), t.extent(2), t.extent(3)};
}

} // namespace ssanet
