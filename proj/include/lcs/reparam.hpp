#pragma once

#include <cstdint>
#include <string>

#include "lcs/conv.hpp"
#include "lcs/error.hpp"
#include "lcs/model.hpp"

namespace lcs {

// Structural reparameterization: the linear expand -> 3x3 -> reduce chain of
// an RRRB, together with both identity branches, collapses into a single
// 3x3 convolution. All kernel algebra runs in double; callers cast once at
// the end.

/// Embeds a 1x1 kernel at the center tap of a zero 3x3 kernel.
template <typename T>
ConvWeights<T> pad_1x1_to_3x3(const ConvWeights<T>& w)
{
    w.validate();
    if (w.geom.kernel_h != 1 || w.geom.kernel_w != 1)
        throw ShapeError("pad_1x1_to_3x3: kernel is not 1x1");
    ConvGeometry g = w.geom;
    g.kernel_h = g.kernel_w = 3;
    g.padding = 1;
    auto out = ConvWeights<T>::zeros(g);
    out.bias = w.bias;
    const std::int64_t cin_g = g.in_per_group();
    for (std::int64_t o = 0; o < g.out_channels; ++o)
        for (std::int64_t i = 0; i < cin_g; ++i)
            out.at(o, i, 1, 1) = w.at(o, i, 0, 0);
    return out;
}

/// Sequential composition b(a(x)) as one convolution. Supported: 1x1 then
/// kxk, or kxk then 1x1; stride 1, groups 1. When a carries a bias and b is
/// kxk, the composition is exact if b's input border is padded with a's bias
/// (which is what zero-padding x then applying a 1x1 a produces).
inline ConvWeights<double> merge_seq(const ConvWeights<double>& a, const ConvWeights<double>& b)
{
    a.validate();
    b.validate();
    if (a.geom.groups != 1 || b.geom.groups != 1 || a.geom.stride != 1 || b.geom.stride != 1)
        throw UnsupportedPatternError("merge_seq: only stride-1, group-1 convolutions can be merged");
    if (b.geom.in_channels != a.geom.out_channels)
        throw ShapeError("merge_seq: second conv consumes " + std::to_string(b.geom.in_channels) +
                         " channels, first produces " + std::to_string(a.geom.out_channels));
    const bool a_pointwise = a.geom.kernel_h == 1 && a.geom.kernel_w == 1 && a.geom.padding == 0;
    const bool b_pointwise = b.geom.kernel_h == 1 && b.geom.kernel_w == 1 && b.geom.padding == 0;
    const std::int64_t M = a.geom.out_channels;

    if (a_pointwise) {
        ConvGeometry g = b.geom;
        g.in_channels = a.geom.in_channels;
        auto out = ConvWeights<double>::zeros(g);
        const std::int64_t taps = g.taps();
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
            double bias = b.bias[static_cast<std::size_t>(o)];
            for (std::int64_t m = 0; m < M; ++m) {
                const double* bk = &b.at(o, m, 0, 0);
                double tap_sum = 0.0;
                for (std::int64_t t = 0; t < taps; ++t)
                    tap_sum += bk[t];
                bias += tap_sum * a.bias[static_cast<std::size_t>(m)];
                for (std::int64_t i = 0; i < g.in_channels; ++i) {
                    const double av = a.at(m, i, 0, 0);
                    double* ok = &out.at(o, i, 0, 0);
                    for (std::int64_t t = 0; t < taps; ++t)
                        ok[t] += bk[t] * av;
                }
            }
            out.bias[static_cast<std::size_t>(o)] = bias;
        }
        return out;
    }
    if (b_pointwise) {
        ConvGeometry g = a.geom;
        g.out_channels = b.geom.out_channels;
        auto out = ConvWeights<double>::zeros(g);
        const std::int64_t taps = g.taps();
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
            double bias = b.bias[static_cast<std::size_t>(o)];
            for (std::int64_t m = 0; m < M; ++m) {
                const double bv = b.at(o, m, 0, 0);
                bias += bv * a.bias[static_cast<std::size_t>(m)];
                for (std::int64_t i = 0; i < g.in_channels; ++i) {
                    const double* ak = &a.at(m, i, 0, 0);
                    double* ok = &out.at(o, i, 0, 0);
                    for (std::int64_t t = 0; t < taps; ++t)
                        ok[t] += bv * ak[t];
                }
            }
            out.bias[static_cast<std::size_t>(o)] = bias;
        }
        return out;
    }
    throw UnsupportedPatternError("merge_seq: one of the two kernels must be 1x1");
}

/// Folds an identity branch into a square kernel: center tap of the
/// diagonal += 1.
template <typename T>
ConvWeights<T> add_identity(ConvWeights<T> w)
{
    w.validate();
    if (w.geom.in_channels != w.geom.out_channels || w.geom.groups != 1)
        throw ShapeError("add_identity: kernel must map C channels to C channels with groups = 1");
    if (w.geom.kernel_h % 2 == 0 || w.geom.kernel_w % 2 == 0 || w.geom.stride != 1)
        throw ShapeError("add_identity: needs an odd, stride-1 kernel");
    for (std::int64_t o = 0; o < w.geom.out_channels; ++o)
        w.at(o, o, w.geom.kernel_h / 2, w.geom.kernel_w / 2) += T{1};
    return w;
}

/// reduce o (k3 + I) o expand + I as a single 3x3 kernel, computed in double.
template <typename T>
ConvWeights<T> merge_rrrb(const ConvWeights<T>& expand, const ConvWeights<T>& k3, const ConvWeights<T>& reduce)
{
    const auto inner = add_identity(k3.template cast<double>());
    const auto expanded = merge_seq(expand.template cast<double>(), inner);
    const auto merged = merge_seq(expanded, reduce.template cast<double>());
    return add_identity(merged).template cast<T>();
}

/// Replaces every RRRB triple with its merged kernel; all other layers are
/// copied unchanged. The result belongs to with_mode(cfg, Mode::reparam).
template <typename T>
ModelWeights<T> reparameterize_model(const ModelConfig& cfg, const ModelWeights<T>& w)
{
    if (cfg.mode != Mode::full)
        throw ConfigError("reparameterize_model: weights are already reparameterized");
    validate_weights(cfg, w);
    ModelWeights<T> out;
    for (const auto& s : layer_specs(with_mode(cfg, Mode::reparam))) {
        if (s.name.ends_with(".merged")) {
            const std::string stem = s.name.substr(0, s.name.size() - std::string(".merged").size());
            out.emplace(s.name, merge_rrrb(get_layer(w, stem + ".expand"), get_layer(w, stem + ".k3"),
                                           get_layer(w, stem + ".reduce")));
        } else {
            out.emplace(s.name, get_layer(w, s.name));
        }
    }
    return out;
}

} // namespace lcs
