#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "lcs/error.hpp"

namespace lcs {

using Bytes = std::vector<std::uint8_t>;

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T v)
    {
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, &v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(raw, raw + sizeof(T));
        buf_.insert(buf_.end(), raw, raw + sizeof(T));
    }

    template <typename T>
    void put_array(std::span<const T> values)
    {
        if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
            const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
            buf_.insert(buf_.end(), p, p + values.size_bytes());
        } else {
            for (const T& v : values)
                put(v);
        }
    }

    void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    const Bytes& bytes() const noexcept { return buf_; }
    Bytes take() noexcept { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Bounds-checked little-endian reader; running past the end is a FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get()
    {
        need(sizeof(T));
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(raw, raw + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, raw, sizeof(T));
        return v;
    }

    template <typename T>
    std::vector<T> get_array(std::size_t count)
    {
        if (count > remaining() / sizeof(T))
            throw FormatError("truncated data: need " + std::to_string(count * sizeof(T)) + " bytes");
        std::vector<T> out(count);
        if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
            std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(T));
            pos_ += count * sizeof(T);
        } else {
            for (auto& v : out)
                v = get<T>();
        }
        return out;
    }

    std::string get_string(std::size_t len)
    {
        need(len);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
        pos_ += len;
        return s;
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const
    {
        if (n > remaining())
            throw FormatError("truncated data at offset " + std::to_string(pos_));
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("failed reading '" + path.string() + "'");
    return data;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

} // namespace lcs
