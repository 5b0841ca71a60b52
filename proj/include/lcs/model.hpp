#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lcs/conv.hpp"
#include "lcs/error.hpp"
#include "lcs/ops.hpp"
#include "lcs/quantize.hpp"
#include "lcs/tensor.hpp"

namespace lcs {

enum class Mode : std::uint8_t { full = 0, reparam = 1 };

inline const char* to_string(Mode m) { return m == Mode::full ? "full" : "reparam"; }

/// Generator hyperparameters. Defaults describe the deployed scaler:
/// four feature blocks of 38 channels, expansion factor two, x2 upscaling.
struct ModelConfig {
    std::int64_t num_blocks = 4;
    std::int64_t channels = 38;
    std::int64_t expansion = 2;
    std::int64_t rrrb_per_block = 3;
    std::int64_t esa_channels = 16;
    std::int64_t scale = 2;
    Mode mode = Mode::full;

    std::int64_t expanded_channels() const noexcept { return channels * expansion; }

    void validate() const
    {
        if (num_blocks < 1 || channels < 1 || expansion < 1 || rrrb_per_block < 1 || esa_channels < 1 || scale < 1)
            throw ConfigError("model config fields must all be >= 1");
    }

    bool operator==(const ModelConfig&) const = default;
};

inline ModelConfig with_mode(ModelConfig cfg, Mode m)
{
    cfg.mode = m;
    return cfg;
}

/// Canonical layer names shared with the training-side exporter.
namespace names {
inline std::string block(std::int64_t b) { return "block" + std::to_string(b); }
inline std::string rrrb(std::int64_t b, std::int64_t j, std::string_view part)
{
    return block(b) + ".rrrb" + std::to_string(j) + "." + std::string(part);
}
inline std::string conv1(std::int64_t b) { return block(b) + ".conv1"; }
inline std::string esa(std::int64_t b, std::string_view part) { return block(b) + ".esa." + std::string(part); }
inline constexpr std::string_view head = "head";
inline constexpr std::string_view trunk = "trunk";
inline constexpr std::string_view tail = "tail";
} // namespace names

struct LayerSpec {
    std::string name;
    ConvGeometry geom;
};

namespace detail {
inline ConvGeometry conv_geom(std::int64_t out, std::int64_t in, std::int64_t k, std::int64_t stride = 1)
{
    return {out, in, k, k, stride, stride == 1 ? k / 2 : 0, 1};
}
} // namespace detail

/// Every convolution of the generator, in serialization order.
inline std::vector<LayerSpec> layer_specs(const ModelConfig& cfg)
{
    cfg.validate();
    using detail::conv_geom;
    const std::int64_t C = cfg.channels, E = cfg.expanded_channels(), F = cfg.esa_channels;
    std::vector<LayerSpec> specs;
    specs.push_back({std::string(names::head), conv_geom(C, 3, 3)});
    for (std::int64_t b = 0; b < cfg.num_blocks; ++b) {
        for (std::int64_t j = 0; j < cfg.rrrb_per_block; ++j) {
            if (cfg.mode == Mode::full) {
                specs.push_back({names::rrrb(b, j, "expand"), conv_geom(E, C, 1)});
                specs.push_back({names::rrrb(b, j, "k3"), conv_geom(E, E, 3)});
                specs.push_back({names::rrrb(b, j, "reduce"), conv_geom(C, E, 1)});
            } else {
                specs.push_back({names::rrrb(b, j, "merged"), conv_geom(C, C, 3)});
            }
        }
        specs.push_back({names::conv1(b), conv_geom(C, C, 1)});
        specs.push_back({names::esa(b, "reduce"), conv_geom(F, C, 1)});
        specs.push_back({names::esa(b, "stride"), conv_geom(F, F, 3, 2)});
        specs.push_back({names::esa(b, "pool_conv"), conv_geom(F, F, 3)});
        specs.push_back({names::esa(b, "skip"), conv_geom(F, F, 1)});
        specs.push_back({names::esa(b, "expand"), conv_geom(C, F, 1)});
    }
    specs.push_back({std::string(names::trunk), conv_geom(C, C, 3)});
    specs.push_back({std::string(names::tail), conv_geom(3 * cfg.scale * cfg.scale, C, 3)});
    return specs;
}

inline constexpr std::int64_t kEsaPoolWindow = 7;
inline constexpr std::int64_t kEsaPoolStride = 3;

/// Weight plus bias scalars over all layers of the given mode.
inline std::int64_t count_params(const ModelConfig& cfg)
{
    std::int64_t total = 0;
    for (const auto& s : layer_specs(cfg))
        total += s.geom.param_count();
    return total;
}

/// Multiply-accumulates of all convolutions for an h x w input.
/// Activations, pooling, interpolation and elementwise ops are not counted.
inline std::uint64_t count_macs(const ModelConfig& cfg, std::int64_t h, std::int64_t w)
{
    if (h < 1 || w < 1)
        throw ShapeError("count_macs: dimensions must be positive");
    std::uint64_t total = 0;
    std::int64_t esa_h = 0, esa_w = 0;
    for (const auto& s : layer_specs(cfg)) {
        std::int64_t in_h = h, in_w = w;
        if (s.name.ends_with(".esa.pool_conv")) {
            in_h = esa_h;
            in_w = esa_w;
        }
        const auto [oh, ow] = s.geom.output_size(in_h, in_w);
        if (s.name.ends_with(".esa.stride")) {
            if (oh < kEsaPoolWindow || ow < kEsaPoolWindow)
                throw ShapeError("count_macs: input too small for the attention pooling window");
            esa_h = (oh - kEsaPoolWindow) / kEsaPoolStride + 1;
            esa_w = (ow - kEsaPoolWindow) / kEsaPoolStride + 1;
        }
        const auto& g = s.geom;
        total += static_cast<std::uint64_t>(g.out_channels * g.in_per_group() * g.taps()) *
                 static_cast<std::uint64_t>(oh * ow);
    }
    return total;
}

template <typename Layer>
using LayerMap = std::map<std::string, Layer, std::less<>>;

template <typename T>
using ModelWeights = LayerMap<ConvWeights<T>>;

using QuantizedModelWeights = LayerMap<QuantizedConvWeights>;

template <typename Layer>
const Layer& get_layer(const LayerMap<Layer>& w, std::string_view name)
{
    const auto it = w.find(name);
    if (it == w.end())
        throw ConfigError("missing layer '" + std::string(name) + "'");
    return it->second;
}

/// Exactly the layers of layer_specs(cfg), each with matching geometry.
template <typename Layer>
void validate_weights(const ModelConfig& cfg, const LayerMap<Layer>& w)
{
    const auto specs = layer_specs(cfg);
    if (w.size() != specs.size()) {
        for (const auto& [name, layer] : w) {
            const bool known = std::any_of(specs.begin(), specs.end(), [&](const LayerSpec& s) { return s.name == name; });
            if (!known)
                throw ConfigError("unexpected layer '" + name + "' for " + to_string(cfg.mode) + " model");
        }
    }
    for (const auto& s : specs) {
        const auto& layer = get_layer(w, s.name);
        if (!(layer.geom == s.geom))
            throw ConfigError("layer '" + s.name + "' has geometry inconsistent with the model config");
        try {
            layer.validate();
        } catch (const Error& e) {
            throw ConfigError("layer '" + s.name + "': " + e.what());
        }
    }
}

template <typename Layer>
std::int64_t count_params(const LayerMap<Layer>& w)
{
    std::int64_t total = 0;
    for (const auto& [name, layer] : w)
        total += layer.param_count();
    return total;
}

inline ModelWeights<float> zero_weights(const ModelConfig& cfg)
{
    ModelWeights<float> w;
    for (const auto& s : layer_specs(cfg))
        w.emplace(s.name, ConvWeights<float>::zeros(s.geom));
    return w;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for kernels and biases.
inline ModelWeights<float> random_weights(const ModelConfig& cfg, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    ModelWeights<float> w;
    for (const auto& s : layer_specs(cfg)) {
        auto layer = ConvWeights<float>::zeros(s.geom);
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.geom.in_per_group() * s.geom.taps()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : layer.kernel)
            v = static_cast<float>(dist(rng));
        for (auto& v : layer.bias)
            v = static_cast<float>(dist(rng));
        w.emplace(s.name, std::move(layer));
    }
    return w;
}

template <typename U, typename T>
ModelWeights<U> cast_weights(const ModelWeights<T>& w)
{
    ModelWeights<U> out;
    for (const auto& [name, layer] : w)
        out.emplace(name, layer.template cast<U>());
    return out;
}

inline QuantizedModelWeights quantize_model(const ModelWeights<float>& w)
{
    QuantizedModelWeights out;
    for (const auto& [name, layer] : w)
        out.emplace(name, quantize_conv(layer));
    return out;
}

inline ModelWeights<float> dequantize_model(const QuantizedModelWeights& w)
{
    ModelWeights<float> out;
    for (const auto& [name, layer] : w)
        out.emplace(name, dequantize_conv(layer));
    return out;
}

// Convolution dispatch for the two layer representations.
template <typename T>
Tensor<T> apply_conv(const Tensor<T>& x, const ConvWeights<T>& w)
{
    return conv2d(x, w);
}
inline Tensor<float> apply_conv(const Tensor<float>& x, const QuantizedConvWeights& w) { return conv2d_q(x, w); }

template <typename T>
Tensor<T> apply_conv_bias_padded(const Tensor<T>& x, const ConvWeights<T>& w, std::span<const T> pad)
{
    return conv2d_bias_padded(x, w, pad);
}
inline Tensor<float> apply_conv_bias_padded(const Tensor<float>& x, const QuantizedConvWeights& w,
                                            std::span<const float> pad)
{
    return conv2d_q_bias_padded(x, w, pad);
}

/// Residual-in-residual block: v = expand(x); x + reduce(k3(v) + v).
/// The 3x3 stage pads v with the expand bias (the value expand produces on
/// zero input), which keeps the block exactly mergeable into one 3x3 conv.
/// No activation; callers apply ReLU afterwards.
template <typename T, typename Layer>
Tensor<T> rrrb_forward(const Layer& expand, const Layer& k3, const Layer& reduce, const Tensor<T>& x)
{
    if (expand.geom.out_channels != k3.geom.in_channels || k3.geom.out_channels != k3.geom.in_channels ||
        reduce.geom.in_channels != k3.geom.out_channels || reduce.geom.out_channels != expand.geom.in_channels)
        throw ShapeError("rrrb_forward: expand/k3/reduce shapes do not form a residual block");
    const Tensor<T> v = apply_conv(x, expand);
    Tensor<T> t = apply_conv_bias_padded(v, k3, std::span<const T>(expand.bias));
    elementwise_inplace(t, v, Elementwise::add);
    Tensor<T> y = apply_conv(t, reduce);
    elementwise_inplace(y, x, Elementwise::add);
    return y;
}

/// Enhanced spatial attention: a sigmoid mask computed on a strided,
/// max-pooled branch, upsampled and multiplied onto x.
template <typename T, typename Layer>
Tensor<T> esa_forward(const LayerMap<Layer>& w, std::int64_t block, const Tensor<T>& x)
{
    const Tensor<T> f = apply_conv(x, get_layer(w, names::esa(block, "reduce")));
    Tensor<T> g = apply_conv(f, get_layer(w, names::esa(block, "stride")));
    g = max_pool2d(g, kEsaPoolWindow, kEsaPoolStride);
    g = apply_conv(g, get_layer(w, names::esa(block, "pool_conv")));
    apply_activation_inplace(g, Activation::relu);
    g = interpolate_bilinear(g, f.h(), f.w());
    elementwise_inplace(g, apply_conv(f, get_layer(w, names::esa(block, "skip"))), Elementwise::add);
    Tensor<T> m = apply_conv(g, get_layer(w, names::esa(block, "expand")));
    apply_activation_inplace(m, Activation::sigmoid);
    elementwise_inplace(m, x, Elementwise::mul);
    return m;
}

/// One feature block: rrrb_per_block x (RRRB then ReLU), a 1x1 conv, then ESA.
template <typename T, typename Layer>
Tensor<T> rrfb_forward(const ModelConfig& cfg, const LayerMap<Layer>& w, std::int64_t block, const Tensor<T>& x)
{
    Tensor<T> y = x;
    for (std::int64_t j = 0; j < cfg.rrrb_per_block; ++j) {
        if (cfg.mode == Mode::full) {
            y = rrrb_forward<T>(get_layer(w, names::rrrb(block, j, "expand")), get_layer(w, names::rrrb(block, j, "k3")),
                                get_layer(w, names::rrrb(block, j, "reduce")), y);
        } else {
            y = apply_conv(y, get_layer(w, names::rrrb(block, j, "merged")));
        }
        apply_activation_inplace(y, Activation::relu);
    }
    y = apply_conv(y, get_layer(w, names::conv1(block)));
    return esa_forward(w, block, y);
}

/// LR (n, 3, h, w) in [0, 1] -> SR (n, 3, h*scale, w*scale) clamped to [0, 1].
template <typename T, typename Layer>
Tensor<T> forward(const ModelConfig& cfg, const LayerMap<Layer>& w, const Tensor<T>& lr)
{
    validate_weights(cfg, w);
    if (lr.c() != 3)
        throw ShapeError("forward: expected a 3-channel input, got " + std::to_string(lr.c()));
    const Tensor<T> head = apply_conv(lr, get_layer(w, names::head));
    Tensor<T> y = head;
    for (std::int64_t b = 0; b < cfg.num_blocks; ++b)
        y = rrfb_forward(cfg, w, b, y);
    y = apply_conv(y, get_layer(w, names::trunk));
    elementwise_inplace(y, head, Elementwise::add);
    y = apply_conv(y, get_layer(w, names::tail));
    y = pixel_shuffle(y, cfg.scale);
    clamp_inplace(y, T{0}, T{1});
    return y;
}

} // namespace lcs
