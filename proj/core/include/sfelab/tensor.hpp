// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <new>
#include <string>
#include <vector>

namespace sfelab {

/// 64-byte aligned allocator. Keeping every buffer on the same alignment
/// phase makes vectorized reductions bit-reproducible across allocations,
/// which the pipeline's byte-identical-report contract depends on.
template <typename T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAlloc() = default;
    template <typename U>
    AlignedAlloc(const AlignedAlloc<U>&) {}

    T* allocate(std::size_t n) {
        void* p = std::aligned_alloc(alignment, ((n * sizeof(T) + alignment - 1) / alignment) * alignment);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) { std::free(p); }

    template <typename U>
    bool operator==(const AlignedAlloc<U>&) const {
        return true;
    }
};

using FloatBuffer = std::vector<float, AlignedAlloc<float>>;

/// Dense n-dimensional array of 32-bit floats, row-major.
/// The universal value type of the numerical core: the product of the
/// shape always equals the length of the flat data array.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, const std::vector<float>& data);
    Tensor(std::vector<int> shape, FloatBuffer data);
    Tensor(std::vector<int> shape, std::initializer_list<float> data)
        : Tensor(std::move(shape), std::vector<float>(data)) {}

    static Tensor full(std::vector<int> shape, float value);
    static Tensor scalar(float value) { return Tensor({1}, {value}); }
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    FloatBuffer& vec() { return data_; }
    const FloatBuffer& vec() const { return data_; }

    float& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    /// Rank-2 element access, [row, col].
    float& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    float at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }

    /// Same data, new shape; element count must match.
    Tensor reshaped(std::vector<int> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(float value);

    /// "[2, 3, 4]" for error messages.
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    FloatBuffer data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

}  // namespace sfelab
