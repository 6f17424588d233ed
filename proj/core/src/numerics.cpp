#include "debias/numerics.hpp"

#include "debias/error.hpp"

#include <algorithm>
#include <cmath>

namespace debias {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw Error(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                    shape_string(t.shape()));
    }
}

} // namespace

Tensor softmax(const Tensor& logits) {
    if (logits.empty()) {
        throw Error("softmax of an empty vector");
    }
    const double top = *std::max_element(logits.values().begin(), logits.values().end());
    Tensor out(logits.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    out *= 1.0 / total;
    return out;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& grad, const Tensor& input) {
    Tensor out = grad;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (input[i] <= 0.0) {
            out[i] = 0.0;
        }
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t padding) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    const auto channels = input.dim(0);
    const auto height = input.dim(1);
    const auto width = input.dim(2);
    const auto filters = kernels.dim(0);
    const auto kh = kernels.dim(2);
    const auto kw = kernels.dim(3);
    if (kernels.dim(1) != channels || bias.size() != filters) {
        throw Error("conv2d shape mismatch: input " + shape_string(input.shape()) + ", kernels " +
                    shape_string(kernels.shape()) + ", bias " + shape_string(bias.shape()));
    }
    if (height + 2 * padding < kh || width + 2 * padding < kw) {
        throw Error("conv2d kernel " + shape_string(kernels.shape()) + " does not fit input " +
                    shape_string(input.shape()));
    }
    const auto out_h = height + 2 * padding - kh + 1;
    const auto out_w = width + 2 * padding - kw + 1;
    Tensor out({filters, out_h, out_w});
    const auto pad = static_cast<std::ptrdiff_t>(padding);
    const auto* in = input.data().data();
    const auto* w = kernels.data().data();
    auto* o = out.data().data();

    for (std::size_t k = 0; k < filters; ++k) {
        double* plane = o + k * out_h * out_w;
        std::fill(plane, plane + out_h * out_w, bias[k]);
        for (std::size_t c = 0; c < channels; ++c) {
            const double* src = in + c * height * width;
            for (std::size_t i = 0; i < kh; ++i) {
                for (std::size_t j = 0; j < kw; ++j) {
                    const double wv = w[((k * channels + c) * kh + i) * kw + j];
                    const auto dy = static_cast<std::ptrdiff_t>(i) - pad;
                    const auto dx = static_cast<std::ptrdiff_t>(j) - pad;
                    const auto y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
                    const auto y1 = static_cast<std::size_t>(
                        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_h),
                                                 static_cast<std::ptrdiff_t>(height) - dy));
                    const auto x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
                    const auto x1 = static_cast<std::size_t>(
                        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_w),
                                                 static_cast<std::ptrdiff_t>(width) - dx));
                    for (std::size_t y = y0; y < y1; ++y) {
                        const double* row = src + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * width;
                        double* dst = plane + y * out_w;
                        for (std::size_t x = x0; x < x1; ++x) {
                            dst[x] += wv * row[static_cast<std::ptrdiff_t>(x) + dx];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_output, const Tensor& input, const Tensor& kernels,
                            std::size_t padding) {
    require_rank(grad_output, 3, "conv2d grad");
    const auto channels = input.dim(0);
    const auto height = input.dim(1);
    const auto width = input.dim(2);
    const auto filters = kernels.dim(0);
    const auto kh = kernels.dim(2);
    const auto kw = kernels.dim(3);
    const auto out_h = grad_output.dim(1);
    const auto out_w = grad_output.dim(2);
    if (grad_output.dim(0) != filters || out_h != height + 2 * padding - kh + 1 ||
        out_w != width + 2 * padding - kw + 1) {
        throw Error("conv2d_backward gradient shape " + shape_string(grad_output.shape()) +
                    " inconsistent with forward");
    }
    Conv2dGrads grads{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({filters})};
    const auto pad = static_cast<std::ptrdiff_t>(padding);
    const auto* g = grad_output.data().data();
    const auto* in = input.data().data();
    const auto* w = kernels.data().data();
    auto* gin = grads.input.data().data();
    auto* gw = grads.kernels.data().data();

    for (std::size_t k = 0; k < filters; ++k) {
        const double* plane = g + k * out_h * out_w;
        double total = 0.0;
        for (std::size_t p = 0; p < out_h * out_w; ++p) {
            total += plane[p];
        }
        grads.bias[k] = total;
        for (std::size_t c = 0; c < channels; ++c) {
            const double* src = in + c * height * width;
            double* dsrc = gin + c * height * width;
            for (std::size_t i = 0; i < kh; ++i) {
                for (std::size_t j = 0; j < kw; ++j) {
                    const auto widx = ((k * channels + c) * kh + i) * kw + j;
                    const double wv = w[widx];
                    const auto dy = static_cast<std::ptrdiff_t>(i) - pad;
                    const auto dx = static_cast<std::ptrdiff_t>(j) - pad;
                    const auto y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
                    const auto y1 = static_cast<std::size_t>(
                        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_h),
                                                 static_cast<std::ptrdiff_t>(height) - dy));
                    const auto x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
                    const auto x1 = static_cast<std::size_t>(
                        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_w),
                                                 static_cast<std::ptrdiff_t>(width) - dx));
                    double acc = 0.0;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const auto src_row = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * width;
                        const double* grow = plane + y * out_w;
                        for (std::size_t x = x0; x < x1; ++x) {
                            const auto sidx = src_row + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx);
                            acc += grow[x] * src[sidx];
                            dsrc[sidx] += grow[x] * wv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    return grads;
}

Tensor global_average_pool(const Tensor& input) {
    require_rank(input, 3, "global_average_pool input");
    const auto channels = input.dim(0);
    const auto area = input.dim(1) * input.dim(2);
    Tensor out({channels});
    for (std::size_t c = 0; c < channels; ++c) {
        double total = 0.0;
        for (std::size_t p = 0; p < area; ++p) {
            total += input[c * area + p];
        }
        out[c] = total / static_cast<double>(area);
    }
    return out;
}

Tensor global_average_pool_backward(const Tensor& grad, std::size_t height, std::size_t width) {
    const auto channels = grad.size();
    const auto area = height * width;
    Tensor out({channels, height, width});
    for (std::size_t c = 0; c < channels; ++c) {
        const double share = grad[c] / static_cast<double>(area);
        for (std::size_t p = 0; p < area; ++p) {
            out[c * area + p] = share;
        }
    }
    return out;
}

Tensor avg_pool2(const Tensor& input) {
    require_rank(input, 3, "avg_pool2 input");
    const auto channels = input.dim(0);
    const auto height = input.dim(1);
    const auto width = input.dim(2);
    if (height % 2 != 0 || width % 2 != 0) {
        throw Error("avg_pool2 needs even spatial dims, got " + shape_string(input.shape()));
    }
    Tensor out({channels, height / 2, width / 2});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < height / 2; ++y) {
            for (std::size_t x = 0; x < width / 2; ++x) {
                out.at(c, y, x) = 0.25 * (input.at(c, 2 * y, 2 * x) + input.at(c, 2 * y, 2 * x + 1) +
                                          input.at(c, 2 * y + 1, 2 * x) + input.at(c, 2 * y + 1, 2 * x + 1));
            }
        }
    }
    return out;
}

Tensor avg_pool2_backward(const Tensor& grad, const Tensor& input) {
    Tensor out(input.shape());
    for (std::size_t c = 0; c < input.dim(0); ++c) {
        for (std::size_t y = 0; y < input.dim(1); ++y) {
            for (std::size_t x = 0; x < input.dim(2); ++x) {
                out.at(c, y, x) = 0.25 * grad.at(c, y / 2, x / 2);
            }
        }
    }
    return out;
}

Tensor linear(const Tensor& weight, const Tensor& bias, const Tensor& x) {
    require_rank(weight, 2, "linear weight");
    const auto rows = weight.dim(0);
    const auto cols = weight.dim(1);
    if (x.size() != cols || bias.size() != rows) {
        throw Error("linear shape mismatch: weight " + shape_string(weight.shape()) + ", input " +
                    shape_string(x.shape()) + ", bias " + shape_string(bias.shape()));
    }
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = bias[r];
        for (std::size_t c = 0; c < cols; ++c) {
            acc += weight[r * cols + c] * x[c];
        }
        out[r] = acc;
    }
    return out;
}

LinearGrads linear_backward(const Tensor& grad_output, const Tensor& weight, const Tensor& x) {
    const auto rows = weight.dim(0);
    const auto cols = weight.dim(1);
    LinearGrads grads{Tensor({cols}), Tensor(weight.shape()), grad_output.reshaped({rows})};
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = grad_output[r];
        for (std::size_t c = 0; c < cols; ++c) {
            grads.weight[r * cols + c] = g * x[c];
            grads.input[c] += g * weight[r * cols + c];
        }
    }
    return grads;
}

Tensor finite_difference_grad(const ScalarFunction& f, const Tensor& x, double step) {
    if (!(step > 0.0)) {
        throw Error("finite difference step must be positive");
    }
    Tensor probe = x;
    Tensor grad(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + step;
        const double up = f(probe);
        probe[i] = original - step;
        const double down = f(probe);
        probe[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error("non-finite function value during finite differencing at coordinate " +
                        std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double relative_error(double a, double b, double floor) noexcept {
    const double scale = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / scale;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
    if (a.shape() != b.shape()) {
        throw Error("max_relative_error shape mismatch " + shape_string(a.shape()) + " vs " +
                    shape_string(b.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, relative_error(a[i], b[i], floor));
    }
    return worst;
}

} // namespace debias
