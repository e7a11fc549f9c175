// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeforge/tensorstore.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <tuple>

#include <json.hpp>

#include "moeforge/error.hpp"

namespace moeforge {

static_assert(std::endian::native == std::endian::little,
              "tensor data is stored little-endian; big-endian hosts are not supported");

namespace {

constexpr std::uint64_t kMaxHeaderBytes = 100ull * 1000 * 1000;
constexpr std::string_view kMetadataKey = "__metadata__";

std::uint64_t checked_numel(const std::vector<std::int64_t>& shape, const std::string& name) {
    std::uint64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw Error("negative dimension in tensor " + name);
        auto ud = static_cast<std::uint64_t>(d);
        if (ud != 0 && n > std::numeric_limits<std::uint64_t>::max() / ud)
            throw Error("element count overflow in tensor " + name);
        n *= ud;
    }
    return n;
}

template <typename Src>
std::vector<std::uint8_t> encode_values(DType dtype, std::span<const Src> values) {
    std::vector<std::uint8_t> out(values.size() * dtype_size(dtype));
    auto* dst = out.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        switch (dtype) {
            case DType::F64: {
                double v = static_cast<double>(values[i]);
                std::memcpy(dst + i * 8, &v, 8);
                break;
            }
            case DType::F32: {
                float v = static_cast<float>(values[i]);
                std::memcpy(dst + i * 4, &v, 4);
                break;
            }
            case DType::F16: {
                std::uint16_t v = float_to_half(static_cast<float>(values[i]));
                std::memcpy(dst + i * 2, &v, 2);
                break;
            }
            case DType::BF16: {
                std::uint16_t v = float_to_bfloat16(static_cast<float>(values[i]));
                std::memcpy(dst + i * 2, &v, 2);
                break;
            }
        }
    }
    return out;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::F64: return 8;
        case DType::F32: return 4;
        case DType::F16:
        case DType::BF16: return 2;
    }
    return 0;
}

std::string_view dtype_name(DType dtype) {
    switch (dtype) {
        case DType::F64: return "F64";
        case DType::F32: return "F32";
        case DType::F16: return "F16";
        case DType::BF16: return "BF16";
    }
    return "?";
}

DType parse_dtype(std::string_view name) {
    if (name == "F64") return DType::F64;
    if (name == "F32") return DType::F32;
    if (name == "F16") return DType::F16;
    if (name == "BF16") return DType::BF16;
    throw Error("unsupported dtype: " + std::string(name));
}

std::uint16_t float_to_half(float value) {
    const auto x = std::bit_cast<std::uint32_t>(value);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t exp = (x >> 23) & 0xffu;
    std::uint32_t mant = x & 0x7fffffu;
    if (exp == 0xffu) {
        // inf stays inf; NaN keeps a quiet bit so it never collapses to inf
        return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u | (mant >> 13) : 0u));
    }
    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);
    if (e <= 0) {
        if (e < -10) return static_cast<std::uint16_t>(sign);
        mant |= 0x800000u;
        const int shift = 14 - e;
        std::uint32_t half_mant = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
        return static_cast<std::uint16_t>(sign | half_mant);
    }
    std::uint32_t half = sign | (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // carry may reach inf, as it should
    return static_cast<std::uint16_t>(half);
}

float half_to_float(std::uint16_t bits) {
    const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
    const std::uint32_t exp = (bits >> 10) & 0x1fu;
    const std::uint32_t mant = bits & 0x3ffu;
    if (exp == 0) {
        if (mant == 0) return std::bit_cast<float>(sign);
        float v = static_cast<float>(mant) * 0x1p-24f;
        return sign ? -v : v;
    }
    if (exp == 0x1f) return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
    return std::bit_cast<float>(sign | ((exp + 112u) << 23) | (mant << 13));
}

std::uint16_t float_to_bfloat16(float value) {
    const auto x = std::bit_cast<std::uint32_t>(value);
    if ((x & 0x7f800000u) == 0x7f800000u && (x & 0x7fffffu)) {
        return static_cast<std::uint16_t>((x >> 16) | 0x40u);
    }
    const std::uint32_t rounding = 0x7fffu + ((x >> 16) & 1u);
    return static_cast<std::uint16_t>((x + rounding) >> 16);
}

float bfloat16_to_float(std::uint16_t bits) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

// ---------------------------------------------------------------------------

Tensor::Tensor(DType dtype, std::vector<std::int64_t> shape, std::vector<std::uint8_t> bytes)
    : dtype_(dtype), shape_(std::move(shape)), bytes_(std::move(bytes)) {
    const auto n = checked_numel(shape_, "<anonymous>");
    if (n * dtype_size(dtype_) != bytes_.size()) {
        throw Error("tensor byte size " + std::to_string(bytes_.size()) +
                    " does not match shape and dtype");
    }
}

Tensor Tensor::from_values(DType dtype, std::vector<std::int64_t> shape,
                           std::span<const double> values) {
    if (checked_numel(shape, "<anonymous>") != values.size())
        throw Error("value count does not match tensor shape");
    return Tensor(dtype, std::move(shape), encode_values(dtype, values));
}

Tensor Tensor::from_values(DType dtype, std::vector<std::int64_t> shape,
                           std::span<const float> values) {
    if (checked_numel(shape, "<anonymous>") != values.size())
        throw Error("value count does not match tensor shape");
    return Tensor(dtype, std::move(shape), encode_values(dtype, values));
}

std::size_t Tensor::numel() const { return bytes_.size() / dtype_size(dtype_); }

template <typename T>
std::vector<T> Tensor::values() const {
    const std::size_t n = numel();
    std::vector<T> out(n);
    const auto* src = bytes_.data();
    switch (dtype_) {
        case DType::F64:
            for (std::size_t i = 0; i < n; ++i) {
                double v;
                std::memcpy(&v, src + i * 8, 8);
                out[i] = static_cast<T>(v);
            }
            break;
        case DType::F32:
            for (std::size_t i = 0; i < n; ++i) {
                float v;
                std::memcpy(&v, src + i * 4, 4);
                out[i] = static_cast<T>(v);
            }
            break;
        case DType::F16:
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t v;
                std::memcpy(&v, src + i * 2, 2);
                out[i] = static_cast<T>(half_to_float(v));
            }
            break;
        case DType::BF16:
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t v;
                std::memcpy(&v, src + i * 2, 2);
                out[i] = static_cast<T>(bfloat16_to_float(v));
            }
            break;
    }
    return out;
}

template std::vector<float> Tensor::values<float>() const;
template std::vector<double> Tensor::values<double>() const;

std::vector<double> Tensor::to_f64() const { return values<double>(); }
std::vector<float> Tensor::to_f32() const { return values<float>(); }

// ---------------------------------------------------------------------------

const Tensor& TensorMap::at(std::string_view name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("missing tensor: " + std::string(name));
    return it->second;
}

const Tensor* TensorMap::find(std::string_view name) const {
    auto it = tensors_.find(name);
    return it == tensors_.end() ? nullptr : &it->second;
}

void TensorMap::insert(std::string name, Tensor tensor) {
    if (name.empty()) throw Error("tensor name must be non-empty");
    if (name == kMetadataKey) throw Error("tensor name collides with reserved key __metadata__");
    auto [it, inserted] = tensors_.emplace(std::move(name), std::move(tensor));
    if (!inserted) throw Error("tensor name collision: " + it->first);
}

void TensorMap::set(std::string name, Tensor tensor) {
    if (name.empty()) throw Error("tensor name must be non-empty");
    if (name == kMetadataKey) throw Error("tensor name collides with reserved key __metadata__");
    tensors_.insert_or_assign(std::move(name), std::move(tensor));
}

bool TensorMap::erase(std::string_view name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) return false;
    tensors_.erase(it);
    return true;
}

std::string TensorMap::metadata_or(std::string_view key, std::string fallback) const {
    auto it = metadata_.find(key);
    return it == metadata_.end() ? std::move(fallback) : it->second;
}

std::uint64_t TensorMap::parameter_count() const {
    std::uint64_t total = 0;
    for (const auto& [name, t] : tensors_) total += t.numel();
    return total;
}

// ---------------------------------------------------------------------------

CheckpointHeader parse_checkpoint_header(std::span<const std::uint8_t> file) {
    if (file.size() < 8) throw Error("truncated header: file shorter than 8 bytes");
    std::uint64_t n = 0;
    std::memcpy(&n, file.data(), 8);
    if (n > kMaxHeaderBytes) throw Error("malformed header length: " + std::to_string(n) +
                                         " exceeds the 100 MB cap");
    if (n > file.size() - 8) throw Error("truncated header: declared length " + std::to_string(n) +
                                         " exceeds file size");

    const auto* begin = reinterpret_cast<const char*>(file.data() + 8);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(begin, begin + n);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("header JSON parse failure: ") + e.what());
    }
    if (!header.is_object()) throw Error("header JSON parse failure: top level is not an object");

    CheckpointHeader out;
    out.header_size = n;
    out.data_size = file.size() - 8 - n;

    for (const auto& [key, value] : header.items()) {
        if (key == kMetadataKey) {
            if (!value.is_object()) throw Error("__metadata__ must be an object");
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) throw Error("__metadata__ value for '" + mk + "' is not a string");
                out.metadata.emplace(mk, mv.get<std::string>());
            }
            continue;
        }
        if (!value.is_object()) throw Error("header entry for tensor " + key + " is not an object");
        TensorSpec spec;
        spec.name = key;
        try {
            spec.dtype = parse_dtype(value.at("dtype").get<std::string>());
            for (const auto& d : value.at("shape")) {
                if (!d.is_number_unsigned()) throw Error("invalid shape for tensor " + key);
                spec.shape.push_back(d.get<std::int64_t>());
            }
            const auto& offsets = value.at("data_offsets");
            if (!offsets.is_array() || offsets.size() != 2 || !offsets[0].is_number_unsigned() ||
                !offsets[1].is_number_unsigned())
                throw Error("invalid data_offsets for tensor " + key);
            spec.begin = offsets[0].get<std::uint64_t>();
            spec.end = offsets[1].get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw Error("malformed header entry for tensor " + key + ": " + e.what());
        } catch (const Error& e) {
            throw Error(std::string(e.what()) + " (tensor " + key + ")");
        }
        if (spec.end < spec.begin) throw Error("inverted byte range for tensor " + key);
        if (spec.end > out.data_size) throw Error("out-of-bounds byte range for tensor " + key);
        const auto expected = checked_numel(spec.shape, key) * dtype_size(spec.dtype);
        if (spec.end - spec.begin != expected)
            throw Error("byte range length does not match shape and dtype for tensor " + key);
        out.tensors.push_back(std::move(spec));
    }

    std::sort(out.tensors.begin(), out.tensors.end(), [](const TensorSpec& a, const TensorSpec& b) {
        return std::tie(a.begin, a.end, a.name) < std::tie(b.begin, b.end, b.name);
    });
    std::uint64_t cursor = 0;
    const TensorSpec* prev = nullptr;
    for (const auto& spec : out.tensors) {
        if (spec.begin < cursor)
            throw Error("overlapping byte ranges: tensor " + spec.name + " overlaps tensor " + prev->name);
        if (spec.begin > cursor) throw Error("gap in data region before tensor " + spec.name);
        cursor = spec.end;
        prev = &spec;
    }
    if (cursor != out.data_size)
        throw Error("data region has " + std::to_string(out.data_size - cursor) +
                    " bytes not covered by any tensor");
    return out;
}

TensorMap decode_checkpoint(std::span<const std::uint8_t> file) {
    const auto header = parse_checkpoint_header(file);
    const auto* data = file.data() + 8 + header.header_size;
    TensorMap map;
    for (const auto& spec : header.tensors) {
        std::vector<std::uint8_t> bytes(data + spec.begin, data + spec.end);
        map.insert(spec.name, Tensor(spec.dtype, spec.shape, std::move(bytes)));
    }
    map.metadata() = header.metadata;
    return map;
}

std::vector<std::uint8_t> encode_checkpoint(const TensorMap& map) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : map.tensors()) {
        const std::uint64_t size = tensor.bytes().size();
        header[name] = {{"dtype", dtype_name(tensor.dtype())},
                        {"shape", tensor.shape()},
                        {"data_offsets", {offset, offset + size}}};
        offset += size;
    }
    if (!map.metadata().empty()) {
        nlohmann::json meta = nlohmann::json::object();
        for (const auto& [k, v] : map.metadata()) meta[k] = v;
        header[std::string(kMetadataKey)] = std::move(meta);
    }
    std::string text = header.dump();
    // pad so the data region starts 8-byte aligned
    while ((text.size() + 8) % 8 != 0) text.push_back(' ');

    std::vector<std::uint8_t> out;
    out.reserve(8 + text.size() + offset);
    const std::uint64_t n = text.size();
    out.resize(8);
    std::memcpy(out.data(), &n, 8);
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& [name, tensor] : map.tensors())
        out.insert(out.end(), tensor.bytes().begin(), tensor.bytes().end());
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error("cannot open file: " + path.string());
    const auto size = in.tellg();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.seekg(0);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size))
        throw Error("failed to read file: " + path.string());
    return bytes;
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void save_checkpoint(const TensorMap& map, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(map);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed to write file: " + path.string());
}

}  // namespace moeforge
