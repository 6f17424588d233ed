#pragma once

#include "debias/tensor.hpp"

#include <functional>

namespace debias {

/// Numerically stable softmax of a 1-D tensor (max subtracted first).
Tensor softmax(const Tensor& logits);

double sigmoid(double x) noexcept;

Tensor relu(const Tensor& x);
/// Zeroes `grad` wherever the forward input was non-positive.
Tensor relu_backward(const Tensor& grad, const Tensor& input);

/// Stride-1 cross-correlation. input CxHxW, kernels KxCxkhxkw, bias K.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t padding);

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& grad_output, const Tensor& input, const Tensor& kernels,
                            std::size_t padding);

/// CxHxW -> C, spatial mean per channel.
Tensor global_average_pool(const Tensor& input);
/// Spreads a per-channel gradient uniformly over an HxW map.
Tensor global_average_pool_backward(const Tensor& grad, std::size_t height, std::size_t width);

/// Non-overlapping 2x2 average pooling; H and W must be even.
Tensor avg_pool2(const Tensor& input);
Tensor avg_pool2_backward(const Tensor& grad, const Tensor& input);

/// y = W x + b with W of shape OxI.
Tensor linear(const Tensor& weight, const Tensor& bias, const Tensor& x);

struct LinearGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

LinearGrads linear_backward(const Tensor& grad_output, const Tensor& weight, const Tensor& x);

using ScalarFunction = std::function<double(const Tensor&)>;

inline constexpr double kDefaultFiniteDifferenceStep = 1e-5;

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
Tensor finite_difference_grad(const ScalarFunction& f, const Tensor& x,
                              double step = kDefaultFiniteDifferenceStep);

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
/// turning round-off into huge relative errors.
double relative_error(double a, double b, double floor = 1e-8) noexcept;

/// Largest coordinate-wise relative_error between two tensors of equal shape.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

} // namespace debias
