#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lcs/error.hpp"
#include "lcs/tensor.hpp"

namespace lcs {

inline constexpr double kPsnrCap = 100.0;

/// PSNR over every element of both tensors; identical inputs give kPsnrCap.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0)
{
    if (!(a.shape() == b.shape()))
        throw ShapeError("psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    if (a.empty())
        throw ShapeError("psnr: empty tensors");
    double sum = 0.0;
    const auto da = a.data();
    const auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(da.size());
    if (mse == 0.0)
        return kPsnrCap;
    return 10.0 * std::log10(peak * peak / mse);
}

/// Single-channel plane of doubles, row-major.
struct Plane {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<double> v;

    double& operator()(std::int64_t y, std::int64_t x) { return v[static_cast<std::size_t>(y * w + x)]; }
    double operator()(std::int64_t y, std::int64_t x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

/// BT.601 luma (0.299 R + 0.587 G + 0.114 B) of image n; a 1-channel
/// tensor is returned as is.
template <typename T>
Plane luminance(const Tensor<T>& img, std::int64_t n = 0)
{
    if (img.c() != 3 && img.c() != 1)
        throw ShapeError("luminance: expected 1 or 3 channels, got " + std::to_string(img.c()));
    Plane p{img.h(), img.w(), std::vector<double>(static_cast<std::size_t>(img.h() * img.w()))};
    if (img.c() == 1) {
        const T* s = img.plane(n, 0);
        for (std::size_t i = 0; i < p.v.size(); ++i)
            p.v[i] = static_cast<double>(s[i]);
        return p;
    }
    const T* r = img.plane(n, 0);
    const T* g = img.plane(n, 1);
    const T* b = img.plane(n, 2);
    for (std::size_t i = 0; i < p.v.size(); ++i)
        p.v[i] = 0.299 * static_cast<double>(r[i]) + 0.587 * static_cast<double>(g[i]) + 0.114 * static_cast<double>(b[i]);
    return p;
}

namespace detail {

inline std::vector<double> gaussian_kernel_1d(int size, double sigma)
{
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - c;
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k)
        v /= sum;
    return k;
}

// Separable correlation keeping only positions where the window fits.
inline Plane filter_valid(const Plane& in, const std::vector<double>& k)
{
    const auto ks = static_cast<std::int64_t>(k.size());
    const std::int64_t oh = in.h - ks + 1, ow = in.w - ks + 1;
    Plane tmp{in.h, ow, std::vector<double>(static_cast<std::size_t>(in.h * ow))};
    for (std::int64_t y = 0; y < in.h; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::int64_t t = 0; t < ks; ++t)
                s += k[static_cast<std::size_t>(t)] * in(y, x + t);
            tmp(y, x) = s;
        }
    Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh * ow))};
    for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::int64_t t = 0; t < ks; ++t)
                s += k[static_cast<std::size_t>(t)] * tmp(y + t, x);
            out(y, x) = s;
        }
    return out;
}

} // namespace detail

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Mean SSIM of two luma planes over valid window positions.
inline double ssim(const Plane& x, const Plane& y, const SsimParams& p = {})
{
    if (x.h != y.h || x.w != y.w)
        throw ShapeError("ssim: plane size mismatch");
    if (x.h < p.window || x.w < p.window)
        throw ShapeError("ssim: image smaller than the " + std::to_string(p.window) + "x" + std::to_string(p.window) +
                         " window");
    const auto k = detail::gaussian_kernel_1d(p.window, p.sigma);
    auto product = [](const Plane& a, const Plane& b) {
        Plane out{a.h, a.w, std::vector<double>(a.v.size())};
        for (std::size_t i = 0; i < a.v.size(); ++i)
            out.v[i] = a.v[i] * b.v[i];
        return out;
    };
    const Plane mx = detail::filter_valid(x, k);
    const Plane my = detail::filter_valid(y, k);
    const Plane sxx = detail::filter_valid(product(x, x), k);
    const Plane syy = detail::filter_valid(product(y, y), k);
    const Plane sxy = detail::filter_valid(product(x, y), k);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
        const double ux = mx.v[i], uy = my.v[i];
        const double vx = sxx.v[i] - ux * ux;
        const double vy = syy.v[i] - uy * uy;
        const double cxy = sxy.v[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.v.size());
}

/// SSIM on the BT.601 luminance of two single-image tensors.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimParams& p = {})
{
    if (!(a.shape() == b.shape()))
        throw ShapeError("ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    if (a.n() != 1)
        throw ShapeError("ssim: expects a single image (n = 1)");
    return ssim(luminance(a), luminance(b), p);
}

/// Point estimate plus a central interval from empirical quantiles.
struct ConfidenceInterval {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double level = 0.68;
};

/// Linear-interpolation quantile of sorted data (position q * (n - 1)).
inline double quantile_sorted(const std::vector<double>& sorted, double q)
{
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size())
        return sorted.back();
    const double f = pos - static_cast<double>(i);
    return sorted[i] + f * (sorted[i + 1] - sorted[i]);
}

/// Mean and the (1 - level)/2, 1 - (1 - level)/2 quantiles of the scores.
inline ConfidenceInterval aggregate_ci(std::vector<double> scores, double level = 0.68)
{
    if (scores.empty())
        throw DataError("aggregate_ci: no scores");
    if (!(level > 0.0 && level < 1.0))
        throw DataError("aggregate_ci: level must lie in (0, 1)");
    std::sort(scores.begin(), scores.end());
    double sum = 0.0;
    for (double s : scores)
        sum += s;
    const double mean = sum / static_cast<double>(scores.size());
    const double tail = (1.0 - level) / 2.0;
    return {mean, quantile_sorted(scores, tail), quantile_sorted(scores, 1.0 - tail), level};
}

/// Per-image scores for one metric plus their aggregate.
struct MetricReport {
    std::string metric;
    std::vector<std::pair<std::string, double>> per_image;
    ConfidenceInterval aggregate;

    static MetricReport build(std::string metric, std::vector<std::pair<std::string, double>> per_image,
                              double level = 0.68)
    {
        std::vector<double> scores;
        scores.reserve(per_image.size());
        for (const auto& [id, s] : per_image)
            scores.push_back(s);
        auto ci = aggregate_ci(std::move(scores), level);
        return {std::move(metric), std::move(per_image), ci};
    }
};

} // namespace lcs
