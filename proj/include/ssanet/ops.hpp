#pragma once

// Value-level tensor primitives. Each has a differentiable counterpart in
// autodiff.hpp; the backward kernels here are shared by both.

#include <span>
#include <string_view>
#include <vector>

#include "ssanet/tensor.hpp"

namespace ssanet {

enum class Activation { linear, sigmoid, tanh, relu, gelu };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

real activate(real x, Activation kind);
// Derivative at x; `y` is activate(x, kind), passed in to avoid recomputation.
real activate_derivative(real x, real y, Activation kind);

// Border handling of "same" convolutions: zeros outside the volume, or the
// nearest edge voxel repeated.
enum class Padding { zeros, replicate };

// Same-padded, stride-1 3D convolution.
// input (D,H,W,Cin), kernel (kd,kh,kw,Cin,Cout) with odd kd/kh/kw, bias (Cout).
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding = Padding::zeros);
Tensor conv3d(const Tensor& input, const Tensor& kernel, Padding padding = Padding::zeros);

Tensor activation(const Tensor& x, Activation kind);

std::vector<real> softmax(std::span<const real> logits);
Tensor softmax(const Tensor& logits);

// (D,H,W,C) -> (C)
Tensor global_avg_pool(const Tensor& x);

// (D,H,W,C) -> (ceil(D/2),ceil(H/2),ceil(W/2),C): mean over 2x2x2 cells,
// odd remainders padded by replicating the last plane.
Tensor downsample2(const Tensor& x);

namespace kernels {

void check_conv3d(const Shape& input, const Shape& kernel, const Shape* bias);

// Accumulates into whichever of the gradient outputs are non-null.
void conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out, Tensor* grad_input,
                     Tensor* grad_kernel, Tensor* grad_bias, Padding padding = Padding::zeros);

void downsample2_backward(const Tensor& grad_out, Tensor& grad_input);

} // namespace kernels

} // namespace ssanet
