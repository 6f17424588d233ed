#include "debias/tensor.hpp"

#include "debias/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace debias {

std::size_t shape_size(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto d : shape_) {
        if (d == 0) {
            throw Error("tensor dimensions must be positive, got " + shape_string(shape_));
        }
    }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw Error("tensor shape " + shape_string(shape_) + " does not match " +
                    std::to_string(data_.size()) + " elements");
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw Error("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

Tensor Tensor::slice(std::size_t index) const {
    if (shape_.size() < 2 || index >= shape_[0]) {
        throw Error("cannot slice index " + std::to_string(index) + " of shape " + shape_string(shape_));
    }
    Shape inner(shape_.begin() + 1, shape_.end());
    const auto stride = shape_size(inner);
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(index * stride);
    return Tensor(std::move(inner), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(stride)));
}

void Tensor::set_slice(std::size_t index, const Tensor& value) {
    const Shape inner(shape_.begin() + 1, shape_.end());
    if (shape_.size() < 2 || index >= shape_[0] || value.shape() != inner) {
        throw Error("cannot assign " + shape_string(value.shape()) + " into slice of " + shape_string(shape_));
    }
    std::copy(value.values().begin(), value.values().end(),
              data_.begin() + static_cast<std::ptrdiff_t>(index * value.size()));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw Error("shape mismatch " + shape_string(shape_) + " vs " + shape_string(other.shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw Error("shape mismatch " + shape_string(shape_) + " vs " + shape_string(other.shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    return *this;
}

Tensor& Tensor::operator*=(double scale) {
    for (auto& v : data_) {
        v *= scale;
    }
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double scale) { return a *= scale; }
Tensor operator*(double scale, Tensor a) { return a *= scale; }

} // namespace debias
