#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lcs/conv.hpp"
#include "lcs/error.hpp"
#include "lcs/tensor.hpp"

namespace lcs {

inline constexpr int kQuantMax = 127;
inline constexpr float kMinScale = 1e-12f;

/// INT8 kernel with one symmetric scale per output channel; FP32 bias.
/// Dequantized weight: qkernel[o, ...] * scales[o].
struct QuantizedConvWeights {
    ConvGeometry geom;
    std::vector<std::int8_t> qkernel;
    std::vector<float> scales;
    std::vector<float> bias;

    std::int64_t param_count() const noexcept { return static_cast<std::int64_t>(qkernel.size() + bias.size()); }

    void validate() const
    {
        geom.validate();
        if (static_cast<std::int64_t>(qkernel.size()) != geom.kernel_numel() ||
            static_cast<std::int64_t>(scales.size()) != geom.out_channels ||
            static_cast<std::int64_t>(bias.size()) != geom.out_channels)
            throw ShapeError("quantized weight buffers do not match their geometry");
        for (float s : scales)
            if (!(s > 0.0f) || !std::isfinite(s))
                throw DataError("quantization scales must be finite and strictly positive");
        for (std::int8_t q : qkernel)
            if (q < -kQuantMax)
                throw DataError("quantized weight -128 is outside the symmetric range");
    }

    bool operator==(const QuantizedConvWeights&) const = default;
};

inline constexpr int kScaleBits = 17;

/// Rounds a positive scale up to kScaleBits significant bits. With at most 7
/// magnitude bits in q, q * scale then fits a float mantissa exactly.
inline float snap_scale_up(float s)
{
    int e = 0;
    const double m = std::frexp(static_cast<double>(s), &e);
    return static_cast<float>(std::ldexp(std::ceil(std::ldexp(m, kScaleBits)), e - kScaleBits));
}

namespace detail {

// Quantizes one channel with the given scale; false if some dequantized
// value (q * scale rounded to float) lands farther than scale / 2 from w.
inline bool quantize_channel(const float* w, std::int64_t n, float scale, std::int8_t* q)
{
    bool within = true;
    for (std::int64_t k = 0; k < n; ++k) {
        const double r = std::round(static_cast<double>(w[k]) / static_cast<double>(scale));
        const auto v = static_cast<std::int8_t>(std::clamp(r, -static_cast<double>(kQuantMax), static_cast<double>(kQuantMax)));
        q[k] = v;
        const float deq = static_cast<float>(v) * scale;
        within = within && std::abs(static_cast<double>(w[k]) - static_cast<double>(deq)) <= 0.5 * static_cast<double>(scale);
    }
    return within;
}

} // namespace detail

/// Per-output-channel symmetric INT8 quantization, round half away from zero.
/// scale = max|w| / 127, floored at kMinScale. In the rare channel where the
/// float rounding of q * scale pushes a weight past scale / 2, the scale is
/// rounded up to kScaleBits bits instead, which makes dequantization exact.
inline QuantizedConvWeights quantize_conv(const ConvWeights<float>& w)
{
    w.validate();
    const std::int64_t per_out = w.geom.in_per_group() * w.geom.taps();
    QuantizedConvWeights q{w.geom, std::vector<std::int8_t>(w.kernel.size()),
                           std::vector<float>(static_cast<std::size_t>(w.geom.out_channels)), w.bias};
    for (std::int64_t o = 0; o < w.geom.out_channels; ++o) {
        const float* first = w.kernel.data() + o * per_out;
        float max_abs = 0.0f;
        for (std::int64_t k = 0; k < per_out; ++k) {
            if (!std::isfinite(first[k]))
                throw DataError("cannot quantize non-finite weight");
            max_abs = std::max(max_abs, std::abs(first[k]));
        }
        float scale = std::max(max_abs / static_cast<float>(kQuantMax), kMinScale);
        std::int8_t* dst = q.qkernel.data() + o * per_out;
        if (!detail::quantize_channel(first, per_out, scale, dst)) {
            scale = snap_scale_up(scale);
            detail::quantize_channel(first, per_out, scale, dst);
        }
        q.scales[static_cast<std::size_t>(o)] = scale;
    }
    for (float b : q.bias)
        if (!std::isfinite(b))
            throw DataError("cannot quantize layer with non-finite bias");
    return q;
}

/// FP32 kernel = q * scale; the same arithmetic conv2d_q uses internally.
inline std::vector<float> dequantized_kernel(const QuantizedConvWeights& q)
{
    const std::int64_t per_out = q.geom.in_per_group() * q.geom.taps();
    std::vector<float> k(q.qkernel.size());
    for (std::int64_t o = 0; o < q.geom.out_channels; ++o) {
        const float s = q.scales[static_cast<std::size_t>(o)];
        for (std::int64_t j = 0; j < per_out; ++j) {
            const auto idx = static_cast<std::size_t>(o * per_out + j);
            k[idx] = static_cast<float>(q.qkernel[idx]) * s;
        }
    }
    return k;
}

inline ConvWeights<float> dequantize_conv(const QuantizedConvWeights& q)
{
    q.validate();
    return {q.geom, dequantized_kernel(q), q.bias};
}

/// Weights-only quantized convolution: INT8 storage, FP32 activations and
/// accumulation. Bitwise identical to conv2d(input, dequantize_conv(q)).
inline Tensor<float> conv2d_q(const Tensor<float>& input, const QuantizedConvWeights& q)
{
    q.validate();
    const std::vector<float> k = dequantized_kernel(q);
    return detail::conv2d_raw<float>(input, k, q.bias, q.geom);
}

inline Tensor<float> conv2d_q_bias_padded(const Tensor<float>& input, const QuantizedConvWeights& q,
                                          std::span<const float> pad_values)
{
    q.validate();
    const std::vector<float> k = dequantized_kernel(q);
    ConvGeometry g = q.geom;
    const Tensor<float> padded = pad_constant(input, g.padding, pad_values);
    g.padding = 0;
    return detail::conv2d_raw<float>(padded, k, q.bias, g);
}

} // namespace lcs
