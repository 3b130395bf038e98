// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sfelab {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, const std::vector<float>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw std::invalid_argument("shape " + shape_to_string(shape_) + " does not match data length " +
                                    std::to_string(data_.size()));
    }
}

Tensor::Tensor(std::vector<int> shape, FloatBuffer data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw std::invalid_argument("shape " + shape_to_string(shape_) + " does not match data length " +
                                    std::to_string(data_.size()));
    }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (shape_numel(new_shape) != size()) {
        throw std::invalid_argument("cannot reshape " + shape_str() + " to " + shape_to_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(float value) {
    for (float& v : data_) v = value;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace sfelab
