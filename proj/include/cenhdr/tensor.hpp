#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cenhdr/error.hpp"

namespace cenhdr {

/// NCHW extent. Every tensor in the library is rank 4; vectors are (1, c, 1, 1)
/// and matrices (rows, cols, 1, 1).
struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    constexpr std::int64_t numel() const noexcept { return n * c * h * w; }
    constexpr std::int64_t plane() const noexcept { return h * w; }
    friend constexpr bool operator==(const Shape&, const Shape&) = default;

    std::string str() const;

    /// Builds a shape from a dims list, rejecting anything that is not rank 4
    /// or has a negative extent.
    static Shape from_dims(std::span<const std::int64_t> dims);
};

template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{}) : shape_(checked(shape)), data_(static_cast<std::size_t>(shape.numel()), fill) {}

    BasicTensor(Shape shape, std::vector<T> data) : shape_(checked(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
            throw DimensionError("tensor", "data", "length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::int64_t numel() const noexcept { return shape_.numel(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    std::size_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const noexcept {
        return static_cast<std::size_t>(((n * shape_.c + c) * shape_.h + y) * shape_.w + x);
    }
    T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) noexcept { return data_[index(n, c, y, x)]; }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const noexcept { return data_[index(n, c, y, x)]; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Pointer to the (n, c) plane.
    T* plane(std::int64_t n, std::int64_t c) noexcept { return data_.data() + index(n, c, 0, 0); }
    const T* plane(std::int64_t n, std::int64_t c) const noexcept { return data_.data() + index(n, c, 0, 0); }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return BasicTensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    static Shape checked(Shape s) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw DimensionError("tensor", "shape", "negative extent in " + s.str());
        return s;
    }

    Shape shape_{};
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace cenhdr
