#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>

#include <png.h>

#include "lcs/binary_io.hpp"
#include "lcs/error.hpp"
#include "lcs/tensor.hpp"

namespace lcs {

// 8-bit RGB PNG <-> (1, 3, h, w) float tensors in [0, 1].

namespace detail {

struct PngImage {
    png_image img{};
    PngImage()
    {
        img.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&img); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

} // namespace detail

/// Decodes an 8-bit RGB (or RGB palette) PNG; v = byte / 255. Grey, alpha
/// and 16-bit images are a FormatError.
inline Tensor<float> image_to_tensor(std::span<const std::uint8_t> png)
{
    detail::PngImage p;
    if (!png_image_begin_read_from_memory(&p.img, png.data(), png.size()))
        throw FormatError(std::string("PNG decode failed: ") + p.img.message);
    // The simplified API reports 16-bit sources as linear.
    if ((p.img.format & PNG_FORMAT_FLAG_LINEAR) != 0)
        throw FormatError("16-bit PNG is not supported");
    if ((p.img.format & ~PNG_FORMAT_FLAG_COLORMAP) != PNG_FORMAT_RGB)
        throw FormatError("PNG must be 8-bit RGB without alpha");
    p.img.format = PNG_FORMAT_RGB;
    const std::int64_t h = p.img.height, w = p.img.width;
    std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(p.img));
    if (!png_image_finish_read(&p.img, nullptr, raw.data(), 0, nullptr))
        throw FormatError(std::string("PNG decode failed: ") + p.img.message);
    Tensor<float> t(Shape{1, 3, h, w});
    for (std::int64_t c = 0; c < 3; ++c) {
        float* dst = t.plane(0, c);
        for (std::int64_t i = 0; i < h * w; ++i)
            dst[i] = static_cast<float>(raw[static_cast<std::size_t>(i * 3 + c)]) / 255.0f;
    }
    return t;
}

/// byte = round_half_away_from_zero(clamp(v, 0, 1) * 255)
inline std::uint8_t to_byte(float v)
{
    if (!(v > 0.0f))
        return 0;
    const double s = static_cast<double>(std::min(v, 1.0f)) * 255.0;
    return static_cast<std::uint8_t>(std::round(s));
}

/// Encodes a (1, 3, h, w) tensor as an 8-bit RGB PNG.
inline Bytes tensor_to_image(const Tensor<float>& t)
{
    if (t.n() != 1 || t.c() != 3)
        throw ShapeError("tensor_to_image: expected shape (1, 3, h, w), got " + t.shape().str());
    if (t.h() < 1 || t.w() < 1 || t.h() > 0x7FFFFFFF || t.w() > 0x7FFFFFFF)
        throw ShapeError("tensor_to_image: invalid image size");
    const std::int64_t h = t.h(), w = t.w();
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h * w * 3));
    for (std::int64_t c = 0; c < 3; ++c) {
        const float* src = t.plane(0, c);
        for (std::int64_t i = 0; i < h * w; ++i)
            raw[static_cast<std::size_t>(i * 3 + c)] = to_byte(src[i]);
    }
    detail::PngImage p;
    p.img.width = static_cast<png_uint_32>(w);
    p.img.height = static_cast<png_uint_32>(h);
    p.img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&p.img, nullptr, &size, 0, raw.data(), 0, nullptr))
        throw FormatError(std::string("PNG encode failed: ") + p.img.message);
    Bytes out(size);
    if (!png_image_write_to_memory(&p.img, out.data(), &size, 0, raw.data(), 0, nullptr))
        throw FormatError(std::string("PNG encode failed: ") + p.img.message);
    out.resize(size);
    return out;
}

inline Tensor<float> load_image(const std::filesystem::path& path)
{
    const Bytes bytes = read_file(path);
    try {
        return image_to_tensor(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void save_image(const std::filesystem::path& path, const Tensor<float>& t) { write_file(path, tensor_to_image(t)); }

} // namespace lcs
