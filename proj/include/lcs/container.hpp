#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <variant>

#include <zlib.h>

#include "lcs/binary_io.hpp"
#include "lcs/error.hpp"
#include "lcs/model.hpp"
#include "lcs/quantize.hpp"

namespace lcs {

// LCSW weight container, all fields little-endian:
//
//   "LCSW" | u32 version
//   u32 num_blocks, channels, expansion, rrrb_per_block, esa_channels, scale
//   u8 mode (0 full, 1 reparam) | u8 dtype (0 fp32, 1 int8)
//   u32 layer_count
//   per layer: u16 name_len | name (UTF-8) | u8 rank = 4 | u32 dims[4]
//              (out, in / groups, kh, kw)
//              fp32: f32 kernel[prod(dims)]
//              int8: i8 kernel[prod(dims)] | f32 scales[out]
//              f32 bias[out]
//   u32 CRC32 (IEEE) of every preceding byte
//
// Stride, padding and groups are not stored; they follow from the layer name.

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[] = "LCSW";

enum class DType : std::uint8_t { fp32 = 0, int8 = 1 };

inline const char* to_string(DType d) { return d == DType::fp32 ? "fp32" : "int8"; }

/// Result of read_container: config plus FP32 or INT8 weights.
struct LoadedModel {
    ModelConfig cfg;
    std::variant<ModelWeights<float>, QuantizedModelWeights> weights;

    DType dtype() const noexcept { return weights.index() == 0 ? DType::fp32 : DType::int8; }
    const ModelWeights<float>& fp32() const { return std::get<ModelWeights<float>>(weights); }
    const QuantizedModelWeights& int8() const { return std::get<QuantizedModelWeights>(weights); }

    std::int64_t param_count() const
    {
        return std::visit([](const auto& w) { return count_params(w); }, weights);
    }
};

inline std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes)
{
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace detail {

inline void write_header(ByteWriter& out, const ModelConfig& cfg, DType dtype, std::size_t layers)
{
    out.put_bytes(std::string_view(kContainerMagic, 4));
    out.put<std::uint32_t>(kContainerVersion);
    for (std::int64_t v : {cfg.num_blocks, cfg.channels, cfg.expansion, cfg.rrrb_per_block, cfg.esa_channels, cfg.scale})
        out.put<std::uint32_t>(static_cast<std::uint32_t>(v));
    out.put<std::uint8_t>(static_cast<std::uint8_t>(cfg.mode));
    out.put<std::uint8_t>(static_cast<std::uint8_t>(dtype));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(layers));
}

inline void write_layer_header(ByteWriter& out, const std::string& name, const ConvGeometry& g)
{
    out.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    out.put_bytes(name);
    out.put<std::uint8_t>(4);
    for (std::int64_t d : {g.out_channels, g.in_per_group(), g.kernel_h, g.kernel_w})
        out.put<std::uint32_t>(static_cast<std::uint32_t>(d));
}

template <typename Layer>
Bytes write_container_impl(const ModelConfig& cfg, const LayerMap<Layer>& w, DType dtype)
{
    if (w.empty())
        throw ConfigError("write_container: no layers");
    validate_weights(cfg, w);
    const auto specs = layer_specs(cfg);
    ByteWriter out;
    write_header(out, cfg, dtype, specs.size());
    for (const auto& s : specs) {
        if (s.name.size() > 0xFFFF)
            throw ConfigError("layer name too long: " + s.name);
        const Layer& layer = get_layer(w, s.name);
        write_layer_header(out, s.name, layer.geom);
        if constexpr (std::is_same_v<Layer, QuantizedConvWeights>) {
            out.put_array(std::span<const std::int8_t>(layer.qkernel));
            out.put_array(std::span<const float>(layer.scales));
        } else {
            out.put_array(std::span<const float>(layer.kernel));
        }
        out.put_array(std::span<const float>(layer.bias));
    }
    Bytes bytes = out.take();
    const std::uint32_t crc = crc32_ieee(bytes);
    ByteWriter tail;
    tail.put(crc);
    bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
    return bytes;
}

} // namespace detail

/// Serializes FP32 weights; layer records follow layer_specs(cfg) order.
inline Bytes write_container(const ModelConfig& cfg, const ModelWeights<float>& w)
{
    return detail::write_container_impl(cfg, w, DType::fp32);
}

/// Serializes INT8 weights with per-channel scales.
inline Bytes write_container(const ModelConfig& cfg, const QuantizedModelWeights& w)
{
    return detail::write_container_impl(cfg, w, DType::int8);
}

inline Bytes write_container(const LoadedModel& m)
{
    return std::visit([&](const auto& w) { return write_container(m.cfg, w); }, m.weights);
}

/// Parses and validates a container. Errors: bad magic -> FormatError,
/// unknown version -> VersionError, CRC mismatch -> CorruptionError, layers
/// inconsistent with the config -> ConfigError.
inline LoadedModel read_container(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != "LCSW")
        throw FormatError("not a weight container (bad magic)");
    if (bytes.size() < 12)
        throw FormatError("weight container truncated");
    ByteReader head(bytes.subspan(4, 4));
    const auto version = head.get<std::uint32_t>();
    if (version != kContainerVersion)
        throw VersionError("unsupported weight container version " + std::to_string(version));
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader crc_reader(bytes.last(4));
    if (crc32_ieee(body) != crc_reader.get<std::uint32_t>())
        throw CorruptionError("weight container checksum mismatch");

    ByteReader r(body);
    r.get_string(8);
    ModelConfig cfg;
    cfg.num_blocks = r.get<std::uint32_t>();
    cfg.channels = r.get<std::uint32_t>();
    cfg.expansion = r.get<std::uint32_t>();
    cfg.rrrb_per_block = r.get<std::uint32_t>();
    cfg.esa_channels = r.get<std::uint32_t>();
    cfg.scale = r.get<std::uint32_t>();
    const auto mode = r.get<std::uint8_t>();
    const auto dtype = r.get<std::uint8_t>();
    if (mode > 1)
        throw FormatError("unknown model mode " + std::to_string(mode));
    if (dtype > 1)
        throw FormatError("unknown weight dtype " + std::to_string(dtype));
    cfg.mode = static_cast<Mode>(mode);
    cfg.validate();
    const auto count = r.get<std::uint32_t>();

    const auto specs = layer_specs(cfg);
    std::map<std::string, ConvGeometry, std::less<>> expected;
    for (const auto& s : specs)
        expected.emplace(s.name, s.geom);

    ModelWeights<float> fw;
    QuantizedModelWeights qw;
    for (std::uint32_t l = 0; l < count; ++l) {
        const auto name_len = r.get<std::uint16_t>();
        const std::string name = r.get_string(name_len);
        const auto rank = r.get<std::uint8_t>();
        if (rank != 4)
            throw FormatError("layer '" + name + "' has rank " + std::to_string(rank) + ", expected 4");
        std::int64_t dims[4];
        for (auto& d : dims)
            d = r.get<std::uint32_t>();
        const auto it = expected.find(name);
        if (it == expected.end())
            throw ConfigError("unexpected layer '" + name + "' for " + to_string(cfg.mode) + " model");
        const ConvGeometry& g = it->second;
        if (dims[0] != g.out_channels || dims[1] != g.in_per_group() || dims[2] != g.kernel_h || dims[3] != g.kernel_w)
            throw ConfigError("layer '" + name + "' dims inconsistent with the model config");
        if (fw.contains(name) || qw.contains(name))
            throw ConfigError("duplicate layer '" + name + "'");
        const auto numel = static_cast<std::size_t>(g.kernel_numel());
        const auto outs = static_cast<std::size_t>(g.out_channels);
        if (dtype == 0) {
            ConvWeights<float> w{g, r.get_array<float>(numel), {}};
            w.bias = r.get_array<float>(outs);
            fw.emplace(name, std::move(w));
        } else {
            QuantizedConvWeights q{g, r.get_array<std::int8_t>(numel), r.get_array<float>(outs), {}};
            q.bias = r.get_array<float>(outs);
            qw.emplace(name, std::move(q));
        }
    }
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after the last layer record");

    LoadedModel m{cfg, {}};
    if (dtype == 0) {
        validate_weights(cfg, fw);
        m.weights = std::move(fw);
    } else {
        validate_weights(cfg, qw);
        m.weights = std::move(qw);
    }
    return m;
}

inline LoadedModel load_container(const std::filesystem::path& path) { return read_container(read_file(path)); }

inline void save_container(const std::filesystem::path& path, const LoadedModel& m)
{
    write_file(path, write_container(m));
}

} // namespace lcs
