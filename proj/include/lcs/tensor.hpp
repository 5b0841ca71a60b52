#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcs/error.hpp"

namespace lcs {

/// Dimensions of a rank-4 (n, c, h, w) tensor.
struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    constexpr std::int64_t numel() const noexcept { return n * c * h * w; }
    constexpr std::int64_t plane() const noexcept { return h * w; }
    constexpr bool operator==(const Shape&) const = default;

    std::string str() const
    {
        return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
               std::to_string(w) + ")";
    }
};

/// Dense NCHW tensor with row-major storage. Value type; copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{}) : shape_(checked(shape)), data_(static_cast<std::size_t>(shape.numel()), fill) {}

    Tensor(Shape shape, std::vector<T> data) : shape_(checked(shape)), data_(std::move(data))
    {
        if (static_cast<std::int64_t>(data_.size()) != shape_.numel())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_.str());
    }

    const Shape& shape() const noexcept { return shape_; }
    std::int64_t n() const noexcept { return shape_.n; }
    std::int64_t c() const noexcept { return shape_.c; }
    std::int64_t h() const noexcept { return shape_.h; }
    std::int64_t w() const noexcept { return shape_.w; }
    std::int64_t size() const noexcept { return shape_.numel(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T* plane(std::int64_t n, std::int64_t c) noexcept { return data_.data() + offset(n, c, 0, 0); }
    const T* plane(std::int64_t n, std::int64_t c) const noexcept { return data_.data() + offset(n, c, 0, 0); }

    T& operator()(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) noexcept
    {
        return data_[static_cast<std::size_t>(offset(n, c, y, x))];
    }
    const T& operator()(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const noexcept
    {
        return data_[static_cast<std::size_t>(offset(n, c, y, x))];
    }

    template <typename U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i)
            out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor&) const = default;

private:
    static Shape checked(Shape s)
    {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw ShapeError("negative tensor dimension in " + s.str());
        return s;
    }

    std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const noexcept
    {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Shape shape_{};
    std::vector<T> data_;
};

} // namespace lcs
