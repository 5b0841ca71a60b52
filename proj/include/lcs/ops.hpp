#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "lcs/error.hpp"
#include "lcs/tensor.hpp"

namespace lcs {

enum class Activation { relu, sigmoid };
enum class Elementwise { add, mul };

namespace detail {

template <typename T>
inline T sigmoid_scalar(T v)
{
    // Evaluated in double so FP32 saturates into the subnormal range
    // instead of overflowing exp() to inf.
    const double d = static_cast<double>(v);
    if (d >= 0.0)
        return static_cast<T>(1.0 / (1.0 + std::exp(-d)));
    const double e = std::exp(d);
    return static_cast<T>(e / (1.0 + e));
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what)
{
    if (!(a == b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

} // namespace detail

template <typename T>
void apply_activation_inplace(Tensor<T>& t, Activation kind)
{
    auto d = t.data();
    if (kind == Activation::relu) {
        for (auto& v : d)
            v = v > T{} ? v : T{};
    } else {
        for (auto& v : d)
            v = detail::sigmoid_scalar(v);
    }
}

template <typename T>
Tensor<T> apply_activation(Tensor<T> t, Activation kind)
{
    apply_activation_inplace(t, kind);
    return t;
}

template <typename T>
void elementwise_inplace(Tensor<T>& a, const Tensor<T>& b, Elementwise op)
{
    detail::require_same_shape(a.shape(), b.shape(), "elementwise");
    auto da = a.data();
    auto db = b.data();
    if (op == Elementwise::add) {
        for (std::size_t i = 0; i < da.size(); ++i)
            da[i] += db[i];
    } else {
        for (std::size_t i = 0; i < da.size(); ++i)
            da[i] *= db[i];
    }
}

template <typename T>
Tensor<T> elementwise(Tensor<T> a, const Tensor<T>& b, Elementwise op)
{
    elementwise_inplace(a, b, op);
    return a;
}

template <typename T>
void clamp_inplace(Tensor<T>& t, T lo, T hi)
{
    for (auto& v : t.data())
        v = std::clamp(v, lo, hi);
}

/// Sub-pixel rearrangement: out[n, o, y*r+i, x*r+j] = in[n, o*r*r + i*r + j, y, x].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& in, std::int64_t r)
{
    if (r <= 0)
        throw ShapeError("pixel_shuffle: factor must be positive");
    if (in.c() % (r * r) != 0)
        throw ShapeError("pixel_shuffle: " + std::to_string(in.c()) + " channels not divisible by r^2 = " +
                         std::to_string(r * r));
    const std::int64_t oc = in.c() / (r * r), H = in.h(), W = in.w();
    Tensor<T> out(Shape{in.n(), oc, H * r, W * r});
    for (std::int64_t n = 0; n < in.n(); ++n)
        for (std::int64_t o = 0; o < oc; ++o)
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < r; ++j) {
                    const T* src = in.plane(n, o * r * r + i * r + j);
                    for (std::int64_t y = 0; y < H; ++y) {
                        T* dst = &out(n, o, y * r + i, j);
                        for (std::int64_t x = 0; x < W; ++x)
                            dst[x * r] = src[y * W + x];
                    }
                }
    return out;
}

/// Inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& in, std::int64_t r)
{
    if (r <= 0)
        throw ShapeError("pixel_unshuffle: factor must be positive");
    if (in.h() % r != 0 || in.w() % r != 0)
        throw ShapeError("pixel_unshuffle: spatial dims not divisible by factor");
    const std::int64_t H = in.h() / r, W = in.w() / r;
    Tensor<T> out(Shape{in.n(), in.c() * r * r, H, W});
    for (std::int64_t n = 0; n < in.n(); ++n)
        for (std::int64_t o = 0; o < in.c(); ++o)
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < r; ++j)
                    for (std::int64_t y = 0; y < H; ++y)
                        for (std::int64_t x = 0; x < W; ++x)
                            out(n, o * r * r + i * r + j, y, x) = in(n, o, y * r + i, x * r + j);
    return out;
}

/// Sliding-window maximum, k x k window, no padding.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& in, std::int64_t k, std::int64_t stride)
{
    if (k <= 0 || stride <= 0)
        throw ShapeError("max_pool2d: window and stride must be positive");
    if (in.h() < k || in.w() < k)
        throw ShapeError("max_pool2d: window " + std::to_string(k) + " larger than input " + std::to_string(in.h()) +
                         "x" + std::to_string(in.w()));
    const std::int64_t oh = (in.h() - k) / stride + 1, ow = (in.w() - k) / stride + 1;
    Tensor<T> out(Shape{in.n(), in.c(), oh, ow});
    for (std::int64_t n = 0; n < in.n(); ++n)
        for (std::int64_t c = 0; c < in.c(); ++c) {
            const T* src = in.plane(n, c);
            T* dst = out.plane(n, c);
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    T m = -std::numeric_limits<T>::infinity();
                    for (std::int64_t dy = 0; dy < k; ++dy) {
                        const T* row = src + (y * stride + dy) * in.w() + x * stride;
                        for (std::int64_t dx = 0; dx < k; ++dx)
                            m = std::max(m, row[dx]);
                    }
                    dst[y * ow + x] = m;
                }
        }
    return out;
}

/// Bilinear resize with half-pixel centers (align_corners = false);
/// source coordinates are clamped to the valid range.
template <typename T>
Tensor<T> interpolate_bilinear(const Tensor<T>& in, std::int64_t out_h, std::int64_t out_w)
{
    if (out_h < 1 || out_w < 1)
        throw ShapeError("interpolate_bilinear: target size must be positive");
    if (in.h() < 1 || in.w() < 1)
        throw ShapeError("interpolate_bilinear: empty input");
    struct Tap {
        std::int64_t i0, i1;
        T frac;
    };
    auto taps = [](std::int64_t src, std::int64_t dst) {
        std::vector<Tap> t(static_cast<std::size_t>(dst));
        const double ratio = static_cast<double>(src) / static_cast<double>(dst);
        for (std::int64_t d = 0; d < dst; ++d) {
            double s = (static_cast<double>(d) + 0.5) * ratio - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(src - 1));
            const auto i0 = static_cast<std::int64_t>(std::floor(s));
            const auto i1 = std::min(i0 + 1, src - 1);
            t[static_cast<std::size_t>(d)] = {i0, i1, static_cast<T>(s - static_cast<double>(i0))};
        }
        return t;
    };
    const auto ty = taps(in.h(), out_h);
    const auto tx = taps(in.w(), out_w);
    Tensor<T> out(Shape{in.n(), in.c(), out_h, out_w});
    for (std::int64_t n = 0; n < in.n(); ++n)
        for (std::int64_t c = 0; c < in.c(); ++c) {
            const T* src = in.plane(n, c);
            T* dst = out.plane(n, c);
            for (std::int64_t y = 0; y < out_h; ++y) {
                const Tap& a = ty[static_cast<std::size_t>(y)];
                const T* r0 = src + a.i0 * in.w();
                const T* r1 = src + a.i1 * in.w();
                for (std::int64_t x = 0; x < out_w; ++x) {
                    const Tap& b = tx[static_cast<std::size_t>(x)];
                    const T top = r0[b.i0] + b.frac * (r0[b.i1] - r0[b.i0]);
                    const T bot = r1[b.i0] + b.frac * (r1[b.i1] - r1[b.i0]);
                    dst[y * out_w + x] = top + a.frac * (bot - top);
                }
            }
        }
    return out;
}

} // namespace lcs
