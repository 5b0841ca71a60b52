#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lcs/binary_io.hpp"
#include "lcs/error.hpp"
#include "lcs/metrics.hpp"
#include "lcs/tensor.hpp"

namespace lcs {

// Natural Image Quality Evaluator. Features are natural-scene statistics of
// mean-subtracted contrast-normalized (MSCN) coefficients at two scales; the
// score is the distance between the test image's feature Gaussian and a
// model fitted on pristine images.

inline constexpr int kNiqeFeatures = 36;
inline constexpr int kNiqeFeaturesPerScale = 18;
inline constexpr std::int64_t kNiqeDefaultPatch = 96;
inline constexpr double kNiqeRidge = 1e-6;
inline constexpr double kNiqeKeepFraction = 0.75;
inline constexpr std::size_t kAggdMinSamples = 64;

/// Asymmetric generalized Gaussian: shape alpha, left/right standard deviations.
struct AggdFit {
    double alpha = 0.0;
    double sigma_left = 0.0;
    double sigma_right = 0.0;

    /// Scale parameters beta = sigma * sqrt(Gamma(1/alpha) / Gamma(3/alpha)).
    double beta_left() const { return sigma_left * std::sqrt(std::tgamma(1.0 / alpha) / std::tgamma(3.0 / alpha)); }
    double beta_right() const { return sigma_right * std::sqrt(std::tgamma(1.0 / alpha) / std::tgamma(3.0 / alpha)); }
    double mean() const
    {
        return (beta_right() - beta_left()) * std::tgamma(2.0 / alpha) / std::tgamma(1.0 / alpha);
    }
};

namespace detail {

struct AggdTable {
    std::vector<double> alpha;
    std::vector<double> ratio;
};

// r(a) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)) on a = 0.2, 0.201, ..., 10.
inline const AggdTable& aggd_table()
{
    static const AggdTable table = [] {
        AggdTable t;
        for (int i = 0; i <= 9800; ++i) {
            const double a = 0.2 + 0.001 * i;
            t.alpha.push_back(a);
            const double g2 = std::tgamma(2.0 / a);
            t.ratio.push_back(g2 * g2 / (std::tgamma(1.0 / a) * std::tgamma(3.0 / a)));
        }
        return t;
    }();
    return table;
}

inline double sorted_sum(std::vector<double>& v)
{
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v)
        s += x;
    return s;
}

} // namespace detail

/// Moment-matching AGGD fit. Side sums are taken over sorted squares, so a
/// sample set mirrored about zero yields sigma_left == sigma_right exactly.
inline AggdFit fit_aggd(std::span<const double> samples)
{
    if (samples.size() < kAggdMinSamples)
        throw DataError("fit_aggd: need at least " + std::to_string(kAggdMinSamples) + " samples");
    std::vector<double> left, right;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (double s : samples) {
        if (!std::isfinite(s))
            throw DataError("fit_aggd: non-finite sample");
        if (s < 0.0)
            left.push_back(s * s);
        else if (s > 0.0)
            right.push_back(s * s);
        abs_sum += std::abs(s);
        sq_sum += s * s;
    }
    if (left.empty() || right.empty())
        throw DataError("fit_aggd: samples must have both negative and positive values");
    const double nl = static_cast<double>(left.size()), nr = static_cast<double>(right.size());
    const double sigma_l = std::sqrt(detail::sorted_sum(left) / nl);
    const double sigma_r = std::sqrt(detail::sorted_sum(right) / nr);
    const double n = static_cast<double>(samples.size());
    const double gamma_hat = sigma_l / sigma_r;
    const double mean_abs = abs_sum / n;
    const double r_hat = mean_abs * mean_abs / (sq_sum / n);
    const double g2 = gamma_hat * gamma_hat;
    const double r_norm = r_hat * (g2 * gamma_hat + 1.0) * (gamma_hat + 1.0) / ((g2 + 1.0) * (g2 + 1.0));

    const auto& table = detail::aggd_table();
    std::size_t best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < table.ratio.size(); ++i) {
        const double e = (table.ratio[i] - r_norm) * (table.ratio[i] - r_norm);
        if (e < best_err) {
            best_err = e;
            best = i;
        }
    }
    return {table.alpha[best], sigma_l, sigma_r};
}

/// Pristine multivariate Gaussian over the 36 NIQE features.
struct NiqeModel {
    std::array<double, kNiqeFeatures> mean{};
    std::vector<double> covariance = std::vector<double>(kNiqeFeatures * kNiqeFeatures, 0.0); // row-major
    std::int64_t patch_size = kNiqeDefaultPatch;
    std::uint64_t fitted_on = 0;

    double cov(int i, int j) const { return covariance[static_cast<std::size_t>(i * kNiqeFeatures + j)]; }
    bool operator==(const NiqeModel&) const = default;
};

/// Feature rows of the selected patches of one image.
struct NiqeFeatures {
    std::vector<std::array<double, kNiqeFeatures>> rows;
};

namespace detail {

// Separable Gaussian correlation with replicate borders.
inline Plane gaussian_blur_nearest(const Plane& in, const std::vector<double>& k)
{
    const auto r = static_cast<std::int64_t>(k.size() / 2);
    auto clampi = [](std::int64_t v, std::int64_t hi) { return std::clamp<std::int64_t>(v, 0, hi - 1); };
    Plane tmp{in.h, in.w, std::vector<double>(in.v.size())};
    for (std::int64_t y = 0; y < in.h; ++y)
        for (std::int64_t x = 0; x < in.w; ++x) {
            double s = 0.0;
            for (std::int64_t t = -r; t <= r; ++t)
                s += k[static_cast<std::size_t>(t + r)] * in(y, clampi(x + t, in.w));
            tmp(y, x) = s;
        }
    Plane out{in.h, in.w, std::vector<double>(in.v.size())};
    for (std::int64_t y = 0; y < in.h; ++y)
        for (std::int64_t x = 0; x < in.w; ++x) {
            double s = 0.0;
            for (std::int64_t t = -r; t <= r; ++t)
                s += k[static_cast<std::size_t>(t + r)] * tmp(clampi(y + t, in.h), x);
            out(y, x) = s;
        }
    return out;
}

struct Mscn {
    Plane coeffs;
    Plane sigma;
};

// (I - mu) / (sigma + 1) on a 0..255 plane, 7x7 Gaussian with sigma 7/6.
inline Mscn mscn(const Plane& img)
{
    static const std::vector<double> k = gaussian_kernel_1d(7, 7.0 / 6.0);
    const Plane mu = gaussian_blur_nearest(img, k);
    Plane sq{img.h, img.w, std::vector<double>(img.v.size())};
    for (std::size_t i = 0; i < img.v.size(); ++i)
        sq.v[i] = img.v[i] * img.v[i];
    const Plane mu_sq = gaussian_blur_nearest(sq, k);
    Mscn m{Plane{img.h, img.w, std::vector<double>(img.v.size())}, Plane{img.h, img.w, std::vector<double>(img.v.size())}};
    for (std::size_t i = 0; i < img.v.size(); ++i) {
        const double s = std::sqrt(std::abs(mu_sq.v[i] - mu.v[i] * mu.v[i]));
        m.sigma.v[i] = s;
        m.coeffs.v[i] = (img.v[i] - mu.v[i]) / (s + 1.0);
    }
    return m;
}

inline Plane downsample2(const Plane& p)
{
    Plane out{p.h / 2, p.w / 2, std::vector<double>(static_cast<std::size_t>((p.h / 2) * (p.w / 2)))};
    for (std::int64_t y = 0; y < out.h; ++y)
        for (std::int64_t x = 0; x < out.w; ++x)
            out(y, x) = 0.25 * (p(2 * y, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x) + p(2 * y + 1, 2 * x + 1));
    return out;
}

// 18 features of one patch: AGGD shape and mean scale of the coefficients,
// then shape/mean/left/right scale for the four neighbour products.
inline void patch_features(const Plane& c, std::int64_t y0, std::int64_t x0, std::int64_t size, double* out)
{
    std::vector<double> block;
    block.reserve(static_cast<std::size_t>(size * size));
    for (std::int64_t y = y0; y < y0 + size; ++y)
        for (std::int64_t x = x0; x < x0 + size; ++x)
            block.push_back(c(y, x));
    const AggdFit base = fit_aggd(block);
    out[0] = base.alpha;
    out[1] = (base.beta_left() + base.beta_right()) / 2.0;

    constexpr std::int64_t shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    int f = 2;
    std::vector<double> prod;
    for (const auto& s : shifts) {
        prod.clear();
        for (std::int64_t y = y0; y < y0 + size - s[0]; ++y)
            for (std::int64_t x = x0 + std::max<std::int64_t>(0, -s[1]); x < x0 + size - std::max<std::int64_t>(0, s[1]); ++x)
                prod.push_back(c(y, x) * c(y + s[0], x + s[1]));
        const AggdFit fit = fit_aggd(prod);
        out[f++] = fit.alpha;
        out[f++] = fit.mean();
        out[f++] = fit.beta_left();
        out[f++] = fit.beta_right();
    }
}

} // namespace detail

/// Features of every sharp-enough patch of an image (values in [0, 1]).
/// Patches are ranked by mean local deviation at scale 1 and the top 75%
/// kept; patches whose statistics are degenerate (e.g. perfectly flat) are
/// dropped.
template <typename T>
NiqeFeatures niqe_features(const Tensor<T>& img, std::int64_t patch_size = kNiqeDefaultPatch)
{
    if (patch_size < 16 || patch_size % 2 != 0)
        throw ShapeError("niqe: patch size must be even and >= 16");
    if (img.n() != 1)
        throw ShapeError("niqe: expects a single image (n = 1)");
    if (img.h() < 2 * patch_size || img.w() < 2 * patch_size)
        throw ShapeError("niqe: image " + std::to_string(img.h()) + "x" + std::to_string(img.w()) +
                         " smaller than two patches of " + std::to_string(patch_size));
    Plane grey = luminance(img);
    const std::int64_t ph = img.h() / patch_size, pw = img.w() / patch_size;
    Plane cropped{ph * patch_size, pw * patch_size, {}};
    cropped.v.reserve(static_cast<std::size_t>(cropped.h * cropped.w));
    for (std::int64_t y = 0; y < cropped.h; ++y)
        for (std::int64_t x = 0; x < cropped.w; ++x)
            cropped.v.push_back(grey(y, x) * 255.0);

    const detail::Mscn s1 = detail::mscn(cropped);
    const detail::Mscn s2 = detail::mscn(detail::downsample2(cropped));

    struct Candidate {
        std::int64_t py, px;
        double sharpness;
    };
    std::vector<Candidate> cands;
    for (std::int64_t py = 0; py < ph; ++py)
        for (std::int64_t px = 0; px < pw; ++px) {
            double s = 0.0;
            for (std::int64_t y = py * patch_size; y < (py + 1) * patch_size; ++y)
                for (std::int64_t x = px * patch_size; x < (px + 1) * patch_size; ++x)
                    s += s1.sigma(y, x);
            cands.push_back({py, px, s / static_cast<double>(patch_size * patch_size)});
        }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.sharpness > b.sharpness; });
    const auto keep = static_cast<std::size_t>(std::ceil(kNiqeKeepFraction * static_cast<double>(cands.size())));
    cands.resize(std::max<std::size_t>(keep, 1));
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return a.py != b.py ? a.py < b.py : a.px < b.px;
    });

    NiqeFeatures out;
    const std::int64_t half = patch_size / 2;
    for (const auto& c : cands) {
        std::array<double, kNiqeFeatures> row{};
        try {
            detail::patch_features(s1.coeffs, c.py * patch_size, c.px * patch_size, patch_size, row.data());
            detail::patch_features(s2.coeffs, c.py * half, c.px * half, half, row.data() + kNiqeFeaturesPerScale);
        } catch (const DataError&) {
            continue;
        }
        out.rows.push_back(row);
    }
    return out;
}

namespace detail {

inline void feature_moments(const std::vector<std::array<double, kNiqeFeatures>>& rows,
                            std::array<double, kNiqeFeatures>& mean, std::vector<double>& cov)
{
    const auto n = static_cast<double>(rows.size());
    mean.fill(0.0);
    for (const auto& r : rows)
        for (int i = 0; i < kNiqeFeatures; ++i)
            mean[static_cast<std::size_t>(i)] += r[static_cast<std::size_t>(i)];
    for (auto& m : mean)
        m /= n;
    cov.assign(kNiqeFeatures * kNiqeFeatures, 0.0);
    if (rows.size() < 2)
        return;
    for (const auto& r : rows)
        for (int i = 0; i < kNiqeFeatures; ++i)
            for (int j = 0; j < kNiqeFeatures; ++j)
                cov[static_cast<std::size_t>(i * kNiqeFeatures + j)] +=
                    (r[static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)]) *
                    (r[static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)]);
    for (auto& c : cov)
        c /= (n - 1.0);
}

} // namespace detail

/// sqrt((nu - mu)^T ((S + S_model) / 2)^+ (nu - mu)).
inline double niqe_distance(const std::array<double, kNiqeFeatures>& mean, std::span<const double> cov,
                            const NiqeModel& model)
{
    using Mat = Eigen::Matrix<double, kNiqeFeatures, kNiqeFeatures, Eigen::RowMajor>;
    using Vec = Eigen::Matrix<double, kNiqeFeatures, 1>;
    if (cov.size() != static_cast<std::size_t>(kNiqeFeatures * kNiqeFeatures))
        throw ShapeError("niqe_distance: covariance must be 36x36");
    const Mat a = Eigen::Map<const Mat>(cov.data());
    const Mat b = Eigen::Map<const Mat>(model.covariance.data());
    const Mat pooled = (a + b) / 2.0;
    Vec d;
    for (int i = 0; i < kNiqeFeatures; ++i)
        d(i) = mean[static_cast<std::size_t>(i)] - model.mean[static_cast<std::size_t>(i)];
    if (d.isZero(0.0))
        return 0.0;
    const Mat pinv = Eigen::CompleteOrthogonalDecomposition<Mat>(pooled).pseudoInverse();
    const double q = d.dot(pinv * d);
    return std::sqrt(std::max(0.0, q));
}

/// NIQE score of one image against a pristine model; lower is better.
template <typename T>
double niqe(const Tensor<T>& img, const NiqeModel& model)
{
    const NiqeFeatures f = niqe_features(img, model.patch_size);
    if (f.rows.empty())
        throw DataError("niqe: no patch with usable statistics");
    std::array<double, kNiqeFeatures> mean{};
    std::vector<double> cov;
    detail::feature_moments(f.rows, mean, cov);
    return niqe_distance(mean, cov, model);
}

/// Fits the pristine model on a corpus of at least 10 images.
template <typename T>
NiqeModel fit_niqe_model(std::span<const Tensor<T>> corpus, std::int64_t patch_size = kNiqeDefaultPatch)
{
    if (corpus.size() < 10)
        throw DataError("fit_niqe_model: need at least 10 images, got " + std::to_string(corpus.size()));
    std::vector<std::array<double, kNiqeFeatures>> rows;
    for (const auto& img : corpus) {
        if (img.h() < 2 * patch_size || img.w() < 2 * patch_size)
            throw DataError("fit_niqe_model: corpus image " + std::to_string(img.h()) + "x" + std::to_string(img.w()) +
                            " smaller than two patches");
        auto f = niqe_features(img, patch_size);
        rows.insert(rows.end(), f.rows.begin(), f.rows.end());
    }
    if (rows.size() < 2)
        throw DataError("fit_niqe_model: fewer than two usable patches in corpus");
    NiqeModel m;
    m.patch_size = patch_size;
    m.fitted_on = rows.size();
    detail::feature_moments(rows, m.mean, m.covariance);
    for (int i = 0; i < kNiqeFeatures; ++i)
        m.covariance[static_cast<std::size_t>(i * kNiqeFeatures + i)] += kNiqeRidge;
    return m;
}

inline constexpr std::uint32_t kNiqeModelVersion = 1;
inline constexpr std::size_t kNiqeUpperTriangle = kNiqeFeatures * (kNiqeFeatures + 1) / 2;

/// "NIQM", u32 version, u32 patch size, u64 patch count, 36 f64 means, then
/// the upper triangle (diagonal included) of the covariance, row-major.
inline Bytes write_niqe_model(const NiqeModel& m)
{
    ByteWriter w;
    w.put_bytes("NIQM");
    w.put<std::uint32_t>(kNiqeModelVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.patch_size));
    w.put<std::uint64_t>(m.fitted_on);
    for (double v : m.mean)
        w.put(v);
    for (int i = 0; i < kNiqeFeatures; ++i)
        for (int j = i; j < kNiqeFeatures; ++j)
            w.put(m.cov(i, j));
    return w.take();
}

inline NiqeModel read_niqe_model(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    if (bytes.size() < 4 || r.get_string(4) != "NIQM")
        throw FormatError("not a NIQE model file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kNiqeModelVersion)
        throw VersionError("unsupported NIQE model version " + std::to_string(version));
    NiqeModel m;
    m.patch_size = r.get<std::uint32_t>();
    m.fitted_on = r.get<std::uint64_t>();
    for (auto& v : m.mean)
        v = r.get<double>();
    for (int i = 0; i < kNiqeFeatures; ++i)
        for (int j = i; j < kNiqeFeatures; ++j) {
            const double v = r.get<double>();
            m.covariance[static_cast<std::size_t>(i * kNiqeFeatures + j)] = v;
            m.covariance[static_cast<std::size_t>(j * kNiqeFeatures + i)] = v;
        }
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after NIQE model");
    if (m.patch_size < 16 || m.patch_size % 2 != 0)
        throw FormatError("NIQE model has invalid patch size");
    return m;
}

} // namespace lcs
