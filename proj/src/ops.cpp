#include "ssanet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ssanet {

namespace {

using RowMatrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

real sigmoid(real x) {
    if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
    const real e = std::exp(x);
    return e / (1.0f + e);
}

struct ConvGeometry {
    VolumeDims in;
    std::size_t kd, kh, kw, cout;
    Padding padding = Padding::zeros;

    std::size_t taps() const { return kd * kh * kw; }
    std::size_t col_width() const { return taps() * in.channels; }
    bool pointwise() const { return taps() == 1; }
};

ConvGeometry geometry(const Tensor& input, const Tensor& kernel, Padding padding) {
    kernels::check_conv3d(input.shape(), kernel.shape(), nullptr);
    return {volume_dims(input, "conv3d"), kernel.extent(0), kernel.extent(1), kernel.extent(2), kernel.extent(4),
            padding};
}

// Maps a possibly out-of-range source index; -1 marks a zero-padded tap.
std::ptrdiff_t source_index(std::ptrdiff_t i, std::ptrdiff_t n, Padding padding) {
    if (i >= 0 && i < n) return i;
    if (padding == Padding::zeros) return -1;
    return i < 0 ? 0 : n - 1;
}

// Row n of the result holds the padded receptive field of voxel n,
// ordered (a,b,c,cin) to match the kernel's memory layout.
RowMatrix im2col(const Tensor& input, const ConvGeometry& g) {
    const auto& in = g.in;
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(in.voxels()), static_cast<Eigen::Index>(g.col_width()));
    const real* src = input.data().data();
    const std::ptrdiff_t pd = static_cast<std::ptrdiff_t>(g.kd / 2);
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kh / 2);
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kw / 2);
    const std::ptrdiff_t D = static_cast<std::ptrdiff_t>(in.depth);
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(in.height);
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(in.width);
    const std::size_t C = in.channels;
    std::size_t row = 0;
    for (std::ptrdiff_t d = 0; d < D; ++d) {
        for (std::ptrdiff_t h = 0; h < H; ++h) {
            for (std::ptrdiff_t w = 0; w < W; ++w, ++row) {
                real* dst = cols.data() + row * g.col_width();
                for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(g.kd); ++a) {
                    const std::ptrdiff_t sd = source_index(d + a - pd, D, g.padding);
                    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(g.kh); ++b) {
                        const std::ptrdiff_t sh = source_index(h + b - ph, H, g.padding);
                        for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.kw); ++c, dst += C) {
                            const std::ptrdiff_t sw = source_index(w + c - pw, W, g.padding);
                            if (sd < 0 || sh < 0 || sw < 0) continue;
                            const real* p = src + ((sd * H + sh) * W + sw) * static_cast<std::ptrdiff_t>(C);
                            std::copy(p, p + C, dst);
                        }
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_add(const RowMatrix& cols, const ConvGeometry& g, Tensor& grad_input) {
    const auto& in = g.in;
    real* dst = grad_input.data().data();
    const std::ptrdiff_t pd = static_cast<std::ptrdiff_t>(g.kd / 2);
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kh / 2);
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kw / 2);
    const std::ptrdiff_t D = static_cast<std::ptrdiff_t>(in.depth);
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(in.height);
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(in.width);
    const std::size_t C = in.channels;
    std::size_t row = 0;
    for (std::ptrdiff_t d = 0; d < D; ++d) {
        for (std::ptrdiff_t h = 0; h < H; ++h) {
            for (std::ptrdiff_t w = 0; w < W; ++w, ++row) {
                const real* src = cols.data() + row * g.col_width();
                for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(g.kd); ++a) {
                    const std::ptrdiff_t sd = source_index(d + a - pd, D, g.padding);
                    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(g.kh); ++b) {
                        const std::ptrdiff_t sh = source_index(h + b - ph, H, g.padding);
                        for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.kw); ++c, src += C) {
                            const std::ptrdiff_t sw = source_index(w + c - pw, W, g.padding);
                            if (sd < 0 || sh < 0 || sw < 0) continue;
                            real* p = dst + ((sd * H + sh) * W + sw) * static_cast<std::ptrdiff_t>(C);
                            for (std::size_t ch = 0; ch < C; ++ch) p[ch] += src[ch];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

Activation parse_activation(std::string_view name) {
    if (name == "linear") return Activation::linear;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    if (name == "gelu") return Activation::gelu;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation kind) {
    switch (kind) {
    case Activation::linear: return "linear";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    }
    return "linear";
}

real activate(real x, Activation kind) {
    switch (kind) {
    case Activation::linear: return x;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0f ? x : 0.0f;
    case Activation::gelu: return 0.5f * x * (1.0f + std::erf(x * static_cast<real>(std::numbers::sqrt2 / 2)));
    }
    return x;
}

real activate_derivative(real x, real y, Activation kind) {
    switch (kind) {
    case Activation::linear: return 1.0f;
    case Activation::sigmoid: return y * (1.0f - y);
    case Activation::tanh: return 1.0f - y * y;
    case Activation::relu: return x > 0.0f ? 1.0f : 0.0f;
    case Activation::gelu: {
        const real cdf = 0.5f * (1.0f + std::erf(x * static_cast<real>(std::numbers::sqrt2 / 2)));
        const real pdf = std::exp(-0.5f * x * x) * static_cast<real>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
        return cdf + x * pdf;
    }
    }
    return 1.0f;
}

namespace kernels {

void check_conv3d(const Shape& input, const Shape& kernel, const Shape* bias) {
    if (input.rank() != 4 || kernel.rank() != 5) {
        throw std::invalid_argument("conv3d: expected input (D,H,W,Cin) and kernel (k,k,k,Cin,Cout), got input " +
                                    input.str() + " and kernel " + kernel.str());
    }
    for (std::size_t axis = 0; axis < 3; ++axis) {
        if (kernel[axis] % 2 == 0) {
            throw std::invalid_argument("conv3d: kernel " + kernel.str() + " has an even spatial extent");
        }
    }
    if (input[3] != kernel[3]) {
        throw std::invalid_argument("conv3d: channel mismatch between input " + input.str() + " and kernel " +
                                    kernel.str());
    }
    if (bias && (bias->rank() != 1 || (*bias)[0] != kernel[4])) {
        throw std::invalid_argument("conv3d: bias " + bias->str() + " does not match kernel " + kernel.str());
    }
}

void conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out, Tensor* grad_input,
                     Tensor* grad_kernel, Tensor* grad_bias, Padding padding) {
    const ConvGeometry g = geometry(input, kernel, padding);
    const auto n = static_cast<Eigen::Index>(g.in.voxels());
    const auto cout = static_cast<Eigen::Index>(g.cout);
    const auto width = static_cast<Eigen::Index>(g.col_width());
    ConstRowMap gout(grad_out.data().data(), n, cout);
    ConstRowMap kmat(kernel.data().data(), width, cout);

    if (grad_bias) {
        Eigen::Map<Eigen::RowVectorX<real>> gb(grad_bias->data().data(), cout);
        gb += gout.colwise().sum();
    }
    if (!grad_input && !grad_kernel) return;

    if (g.pointwise()) {
        ConstRowMap in(input.data().data(), n, width);
        if (grad_kernel) RowMap(grad_kernel->data().data(), width, cout).noalias() += in.transpose() * gout;
        if (grad_input) RowMap(grad_input->data().data(), n, width).noalias() += gout * kmat.transpose();
        return;
    }
    if (grad_kernel) {
        const RowMatrix cols = im2col(input, g);
        RowMap(grad_kernel->data().data(), width, cout).noalias() += cols.transpose() * gout;
    }
    if (grad_input) {
        RowMatrix gcols(n, width);
        gcols.noalias() = gout * kmat.transpose();
        col2im_add(gcols, g, *grad_input);
    }
}

void downsample2_backward(const Tensor& grad_out, Tensor& grad_input) {
    const VolumeDims in = volume_dims(grad_input, "downsample2");
    const VolumeDims out = volume_dims(grad_out, "downsample2");
    const std::size_t C = in.channels;
    const real* g = grad_out.data().data();
    real* dst = grad_input.data().data();
    for (std::size_t d = 0; d < out.depth; ++d) {
        for (std::size_t h = 0; h < out.height; ++h) {
            for (std::size_t w = 0; w < out.width; ++w) {
                const real* go = g + ((d * out.height + h) * out.width + w) * C;
                for (std::size_t a = 0; a < 2; ++a) {
                    const std::size_t sd = std::min(2 * d + a, in.depth - 1);
                    for (std::size_t b = 0; b < 2; ++b) {
                        const std::size_t sh = std::min(2 * h + b, in.height - 1);
                        for (std::size_t c = 0; c < 2; ++c) {
                            const std::size_t sw = std::min(2 * w + c, in.width - 1);
                            real* p = dst + ((sd * in.height + sh) * in.width + sw) * C;
                            for (std::size_t ch = 0; ch < C; ++ch) p[ch] += 0.125f * go[ch];
                        }
                    }
                }
            }
        }
    }
}

} // namespace kernels

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding) {
    kernels::check_conv3d(input.shape(), kernel.shape(), &bias.shape());
    const ConvGeometry g = geometry(input, kernel, padding);
    const auto n = static_cast<Eigen::Index>(g.in.voxels());
    const auto cout = static_cast<Eigen::Index>(g.cout);
    const auto width = static_cast<Eigen::Index>(g.col_width());
    Tensor out(Shape{g.in.depth, g.in.height, g.in.width, g.cout});
    RowMap y(out.data().data(), n, cout);
    ConstRowMap kmat(kernel.data().data(), width, cout);
    if (g.pointwise()) {
        y.noalias() = ConstRowMap(input.data().data(), n, width) * kmat;
    } else {
        const RowMatrix cols = im2col(input, g);
        y.noalias() = cols * kmat;
    }
    y.rowwise() += Eigen::Map<const Eigen::RowVectorX<real>>(bias.data().data(), cout);
    return out;
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, Padding padding) {
    kernels::check_conv3d(input.shape(), kernel.shape(), nullptr);
    return conv3d(input, kernel, Tensor(Shape{kernel.extent(4)}), padding);
}

Tensor activation(const Tensor& x, Activation kind) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate(x[i], kind);
    return y;
}

std::vector<real> softmax(std::span<const real> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    const real peak = *std::max_element(logits.begin(), logits.end());
    std::vector<real> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (auto& v : out) v = static_cast<real>(v / total);
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1) throw std::invalid_argument("softmax: expected a vector, got " + logits.shape().str());
    return Tensor(logits.shape(), softmax(logits.data()));
}

Tensor global_avg_pool(const Tensor& x) {
    const VolumeDims dims = volume_dims(x, "global_avg_pool");
    std::vector<double> acc(dims.channels, 0.0);
    const real* p = x.data().data();
    for (std::size_t v = 0; v < dims.voxels(); ++v, p += dims.channels) {
        for (std::size_t c = 0; c < dims.channels; ++c) acc[c] += p[c];
    }
    Tensor out(Shape{dims.channels});
    for (std::size_t c = 0; c < dims.channels; ++c) out[c] = static_cast<real>(acc[c] / static_cast<double>(dims.voxels()));
    return out;
}

Tensor downsample2(const Tensor& x) {
    const VolumeDims in = volume_dims(x, "downsample2");
    const VolumeDims out{(in.depth + 1) / 2, (in.height + 1) / 2, (in.width + 1) / 2, in.channels};
    Tensor y(Shape{out.depth, out.height, out.width, out.channels});
    const std::size_t C = in.channels;
    const real* src = x.data().data();
    real* dst = y.data().data();
    for (std::size_t d = 0; d < out.depth; ++d) {
        for (std::size_t h = 0; h < out.height; ++h) {
            for (std::size_t w = 0; w < out.width; ++w) {
                real* o = dst + ((d * out.height + h) * out.width + w) * C;
                for (std::size_t a = 0; a < 2; ++a) {
                    const std::size_t sd = std::min(2 * d + a, in.depth - 1);
                    for (std::size_t b = 0; b < 2; ++b) {
                        const std::size_t sh = std::min(2 * h + b, in.height - 1);
                        for (std::size_t c = 0; c < 2; ++c) {
                            const std::size_t sw = std::min(2 * w + c, in.width - 1);
                            const real* p = src + ((sd * in.height + sh) * in.width + sw) * C;
                            for (std::size_t ch = 0; ch < C; ++ch) o[ch] += p[ch];
                        }
                    }
                }
                for (std::size_t ch = 0; ch < C; ++ch) o[ch] *= 0.125f;
            }
        }
    }
    return y;
}

} // namespace ssanet
