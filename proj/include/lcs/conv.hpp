#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "lcs/error.hpp"
#include "lcs/tensor.hpp"

namespace lcs {

/// Shape and sampling metadata of a 2-D convolution.
struct ConvGeometry {
    std::int64_t out_channels = 0;
    std::int64_t in_channels = 0;
    std::int64_t kernel_h = 1;
    std::int64_t kernel_w = 1;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t groups = 1;

    constexpr std::int64_t in_per_group() const noexcept { return groups > 0 ? in_channels / groups : 0; }
    constexpr std::int64_t out_per_group() const noexcept { return groups > 0 ? out_channels / groups : 0; }
    constexpr std::int64_t taps() const noexcept { return kernel_h * kernel_w; }
    constexpr std::int64_t kernel_numel() const noexcept { return out_channels * in_per_group() * taps(); }
    constexpr std::int64_t param_count() const noexcept { return kernel_numel() + out_channels; }
    constexpr bool operator==(const ConvGeometry&) const = default;

    void validate() const
    {
        if (out_channels <= 0 || in_channels <= 0 || kernel_h <= 0 || kernel_w <= 0)
            throw ShapeError("convolution dimensions must be positive");
        if (stride <= 0 || padding < 0 || groups <= 0)
            throw ShapeError("invalid stride/padding/groups");
        if (in_channels % groups != 0 || out_channels % groups != 0)
            throw ShapeError("channel counts must be divisible by groups");
    }

    /// Output spatial size; throws when the window does not fit.
    std::pair<std::int64_t, std::int64_t> output_size(std::int64_t h, std::int64_t w) const
    {
        const std::int64_t ph = h + 2 * padding - kernel_h;
        const std::int64_t pw = w + 2 * padding - kernel_w;
        if (ph < 0 || pw < 0)
            throw ShapeError("convolution window " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                             " larger than padded input " + std::to_string(h) + "x" + std::to_string(w));
        return {ph / stride + 1, pw / stride + 1};
    }
};

/// Kernel (out, in/groups, kh, kw) plus one bias per output channel.
template <typename T>
struct ConvWeights {
    ConvGeometry geom;
    std::vector<T> kernel;
    std::vector<T> bias;

    static ConvWeights zeros(const ConvGeometry& g)
    {
        g.validate();
        return {g, std::vector<T>(static_cast<std::size_t>(g.kernel_numel()), T{}),
                std::vector<T>(static_cast<std::size_t>(g.out_channels), T{})};
    }

    T& at(std::int64_t o, std::int64_t i, std::int64_t dy, std::int64_t dx)
    {
        return kernel[static_cast<std::size_t>(((o * geom.in_per_group() + i) * geom.kernel_h + dy) * geom.kernel_w + dx)];
    }
    const T& at(std::int64_t o, std::int64_t i, std::int64_t dy, std::int64_t dx) const
    {
        return kernel[static_cast<std::size_t>(((o * geom.in_per_group() + i) * geom.kernel_h + dy) * geom.kernel_w + dx)];
    }

    std::int64_t param_count() const noexcept { return static_cast<std::int64_t>(kernel.size() + bias.size()); }

    void validate() const
    {
        geom.validate();
        if (static_cast<std::int64_t>(kernel.size()) != geom.kernel_numel() ||
            static_cast<std::int64_t>(bias.size()) != geom.out_channels)
            throw ShapeError("convolution weight buffers do not match their geometry");
    }

    template <typename U>
    ConvWeights<U> cast() const
    {
        ConvWeights<U> out{geom, std::vector<U>(kernel.size()), std::vector<U>(bias.size())};
        std::transform(kernel.begin(), kernel.end(), out.kernel.begin(), [](T v) { return static_cast<U>(v); });
        std::transform(bias.begin(), bias.end(), out.bias.begin(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool operator==(const ConvWeights&) const = default;
};

namespace detail {

inline constexpr int kOutBlock = 8;
template <typename T>
inline constexpr int kColBlock = static_cast<int>(64 / sizeof(T));

template <typename T>
struct Simd;
template <>
struct Simd<float> {
    typedef float type __attribute__((vector_size(64)));
};
template <>
struct Simd<double> {
    typedef double type __attribute__((vector_size(64)));
};

// One output pixel, taps visited in (i, dy, dx) ascending order; taps that
// fall in the zero padding are skipped.
template <typename T>
inline T conv_pixel(const T* in_group, std::int64_t H, std::int64_t W, const T* k, std::int64_t cin_g,
                    const ConvGeometry& g, std::int64_t y, std::int64_t x, T bias)
{
    T acc = bias;
    const std::int64_t iy0 = y * g.stride - g.padding;
    const std::int64_t ix0 = x * g.stride - g.padding;
    for (std::int64_t i = 0; i < cin_g; ++i) {
        const T* plane = in_group + i * H * W;
        for (std::int64_t dy = 0; dy < g.kernel_h; ++dy) {
            const std::int64_t iy = iy0 + dy;
            if (iy < 0 || iy >= H)
                continue;
            const T* row = plane + iy * W;
            const T* kr = k + (i * g.kernel_h + dy) * g.kernel_w;
            for (std::int64_t dx = 0; dx < g.kernel_w; ++dx) {
                const std::int64_t ix = ix0 + dx;
                if (ix < 0 || ix >= W)
                    continue;
                acc += kr[dx] * row[ix];
            }
        }
    }
    return acc;
}

// kOutBlock output channels by kColBlock adjacent columns of one output row,
// stride 1, every horizontal tap inside the image. Lanes of the vector
// accumulators are distinct output pixels, so the per-pixel order matches
// conv_pixel exactly.
template <typename T>
inline void conv_block(const T* in_group, std::int64_t H, std::int64_t W, const T* packed, std::int64_t cin_g,
                       const ConvGeometry& g, std::int64_t y, std::int64_t x0, const T* bias, int nb, T* out,
                       std::int64_t out_plane)
{
    constexpr int OB = kOutBlock;
    constexpr int XB = kColBlock<T>;
    using vec = typename Simd<T>::type;
    static_assert(sizeof(vec) == XB * sizeof(T));
    vec acc[OB];
    for (int ob = 0; ob < OB; ++ob) {
        const T b = ob < nb ? bias[ob] : T{};
        acc[ob] = vec{} + b;
    }
    const std::int64_t kw = g.kernel_w;
    for (std::int64_t i = 0; i < cin_g; ++i) {
        const T* plane = in_group + i * H * W;
        for (std::int64_t dy = 0; dy < g.kernel_h; ++dy) {
            const std::int64_t iy = y - g.padding + dy;
            if (iy < 0 || iy >= H)
                continue;
            const T* row = plane + iy * W + (x0 - g.padding);
            const T* kr = packed + (i * g.kernel_h + dy) * kw * OB;
            for (std::int64_t dx = 0; dx < kw; ++dx) {
                vec r;
                std::memcpy(&r, row + dx, sizeof(vec));
                const T* kv = kr + dx * OB;
                for (int ob = 0; ob < OB; ++ob)
                    acc[ob] += kv[ob] * r;
            }
        }
    }
    for (int ob = 0; ob < nb; ++ob)
        std::memcpy(out + ob * out_plane, &acc[ob], sizeof(vec));
}

/// Direct convolution over raw kernel/bias buffers laid out as ConvWeights.
template <typename T>
Tensor<T> conv2d_raw(const Tensor<T>& input, std::span<const T> kernel, std::span<const T> bias, const ConvGeometry& g)
{
    g.validate();
    if (input.c() != g.in_channels)
        throw ShapeError("conv2d: input has " + std::to_string(input.c()) + " channels, kernel expects " +
                         std::to_string(g.in_channels));
    if (static_cast<std::int64_t>(kernel.size()) != g.kernel_numel() ||
        static_cast<std::int64_t>(bias.size()) != g.out_channels)
        throw ShapeError("conv2d: weight buffers do not match geometry");
    const auto [oh, ow] = g.output_size(input.h(), input.w());

    constexpr int OB = kOutBlock;
    constexpr int XB = kColBlock<T>;
    const std::int64_t N = input.n(), H = input.h(), W = input.w();
    const std::int64_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
    const std::int64_t taps = g.taps();
    const std::int64_t blocks_per_group = (cout_g + OB - 1) / OB;

    // Repack to [group][block][i][tap][OB] so one broadcast load feeds OB outputs.
    std::vector<T> packed(static_cast<std::size_t>(g.groups * blocks_per_group * cin_g * taps * OB), T{});
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
        const std::int64_t gi = o / cout_g, ol = o % cout_g;
        const std::int64_t blk = ol / OB, lane = ol % OB;
        T* dst = packed.data() + ((gi * blocks_per_group + blk) * cin_g * taps) * OB;
        for (std::int64_t i = 0; i < cin_g; ++i)
            for (std::int64_t t = 0; t < taps; ++t)
                dst[(i * taps + t) * OB + lane] = kernel[static_cast<std::size_t>((o * cin_g + i) * taps + t)];
    }

    // Columns whose horizontal taps all land inside the image.
    std::int64_t x_lo = 0, x_hi = 0;
    if (g.stride == 1) {
        x_lo = std::min<std::int64_t>(g.padding, ow);
        x_hi = std::clamp<std::int64_t>(W - g.kernel_w + g.padding + 1, x_lo, ow);
    }
    const bool blocked = g.stride == 1 && x_hi - x_lo >= XB;

    Tensor<T> out(Shape{N, g.out_channels, oh, ow});
    T* out_data = out.data().data();
    const T* in_data = input.data().data();
    const std::int64_t out_plane = oh * ow;

#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t y = 0; y < oh; ++y) {
            for (std::int64_t gi = 0; gi < g.groups; ++gi) {
                const T* in_group = in_data + (n * g.in_channels + gi * cin_g) * H * W;
                for (std::int64_t blk = 0; blk < blocks_per_group; ++blk) {
                    const std::int64_t o0 = gi * cout_g + blk * OB;
                    const int nb = static_cast<int>(std::min<std::int64_t>(OB, cout_g - blk * OB));
                    T* out_row = out_data + (n * g.out_channels + o0) * out_plane + y * ow;
                    std::int64_t skip_lo = 0, skip_hi = 0;
                    if (blocked) {
                        const T* kp = packed.data() + ((gi * blocks_per_group + blk) * cin_g * taps) * OB;
                        for (std::int64_t x0 = x_lo;; x0 += XB) {
                            // Last block is shifted left to end at x_hi; overlapping
                            // columns are recomputed with identical arithmetic.
                            const std::int64_t xs = std::min<std::int64_t>(x0, x_hi - XB);
                            conv_block(in_group, H, W, kp, cin_g, g, y, xs, bias.data() + o0, nb, out_row + xs,
                                       out_plane);
                            if (xs + XB >= x_hi)
                                break;
                        }
                        skip_lo = x_lo;
                        skip_hi = x_hi;
                    }
                    for (int ob = 0; ob < nb; ++ob) {
                        const std::int64_t o = o0 + ob;
                        const T* k = kernel.data() + o * cin_g * taps;
                        T* dst = out_row + ob * out_plane;
                        for (std::int64_t x = 0; x < ow; ++x) {
                            if (x == skip_lo && skip_hi > skip_lo) {
                                x = skip_hi - 1;
                                continue;
                            }
                            dst[x] = conv_pixel(in_group, H, W, k, cin_g, g, y, x, bias[static_cast<std::size_t>(o)]);
                        }
                    }
                }
            }
        }
    }
    return out;
}

} // namespace detail

/// Zero-padded 2-D convolution. Each output is bias + sum over (i, dy, dx) in
/// ascending order, so results are bitwise reproducible for any thread count.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvWeights<T>& w)
{
    w.validate();
    return detail::conv2d_raw<T>(input, w.kernel, w.bias, w.geom);
}

/// Pads each channel c with the constant values[c] on all four edges.
template <typename T>
Tensor<T> pad_constant(const Tensor<T>& input, std::int64_t pad, std::span<const T> values)
{
    if (pad < 0)
        throw ShapeError("negative padding");
    if (static_cast<std::int64_t>(values.size()) != input.c())
        throw ShapeError("pad_constant: need one pad value per channel");
    const std::int64_t H = input.h(), W = input.w();
    Tensor<T> out(Shape{input.n(), input.c(), H + 2 * pad, W + 2 * pad});
    const std::int64_t OW = W + 2 * pad;
    for (std::int64_t n = 0; n < input.n(); ++n)
        for (std::int64_t c = 0; c < input.c(); ++c) {
            T* dst = out.plane(n, c);
            std::fill(dst, dst + out.shape().plane(), values[static_cast<std::size_t>(c)]);
            const T* src = input.plane(n, c);
            for (std::int64_t y = 0; y < H; ++y)
                std::copy(src + y * W, src + (y + 1) * W, dst + (y + pad) * OW + pad);
        }
    return out;
}

/// Convolution whose border is filled with per-channel constants instead of
/// zeros (w.geom.padding cells on each side).
template <typename T>
Tensor<T> conv2d_bias_padded(const Tensor<T>& input, const ConvWeights<T>& w, std::span<const T> pad_values)
{
    w.validate();
    ConvGeometry g = w.geom;
    const Tensor<T> padded = pad_constant(input, g.padding, pad_values);
    g.padding = 0;
    return detail::conv2d_raw<T>(padded, w.kernel, w.bias, g);
}

} // namespace lcs
