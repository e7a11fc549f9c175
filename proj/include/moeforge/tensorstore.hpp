// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reading and writing of safetensors checkpoints.
//
// Layout: 8-byte little-endian header length N, N bytes of JSON header,
// then the raw little-endian tensor data addressed by "data_offsets"
// relative to the end of the header. Tensors keep their stored bytes
// untouched; half-precision dtypes are decoded to float/double only when a
// caller asks for values, so save(load(f)) reproduces every tensor byte.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moeforge {

enum class DType : std::uint8_t { F64, F32, F16, BF16 };

std::size_t dtype_size(DType dtype);
std::string_view dtype_name(DType dtype);
/// Throws Error("unsupported dtype: X") for anything but F64/F32/F16/BF16.
DType parse_dtype(std::string_view name);

// IEEE binary16 / bfloat16 conversions, round-to-nearest-even on the way down.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);
std::uint16_t float_to_bfloat16(float value);
float bfloat16_to_float(std::uint16_t bits);

/// One entry of a parsed header.
struct TensorSpec {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::int64_t> shape;
    std::uint64_t begin = 0;  // offsets relative to the start of the data region
    std::uint64_t end = 0;
};

class Tensor {
public:
    Tensor() = default;
    Tensor(DType dtype, std::vector<std::int64_t> shape, std::vector<std::uint8_t> bytes);

    /// Encodes `values` into `dtype` (rounding for narrower types).
    static Tensor from_values(DType dtype, std::vector<std::int64_t> shape,
                              std::span<const double> values);
    static Tensor from_values(DType dtype, std::vector<std::int64_t> shape,
                              std::span<const float> values);

    DType dtype() const { return dtype_; }
    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const;
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

    std::vector<double> to_f64() const;
    std::vector<float> to_f32() const;

    template <typename T>
    std::vector<T> values() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    DType dtype_ = DType::F32;
    std::vector<std::int64_t> shape_;
    std::vector<std::uint8_t> bytes_;
};

/// Named tensors plus string metadata. Iteration order is lexicographic by
/// name, which is also the serialization order.
class TensorMap {
public:
    using Tensors = std::map<std::string, Tensor, std::less<>>;
    using Metadata = std::map<std::string, std::string, std::less<>>;

    bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
    /// Throws Error("missing tensor: <name>").
    const Tensor& at(std::string_view name) const;
    const Tensor* find(std::string_view name) const;

    /// Throws Error on an empty name or when the name already exists.
    void insert(std::string name, Tensor tensor);
    /// Inserts or replaces.
    void set(std::string name, Tensor tensor);
    bool erase(std::string_view name);

    const Tensors& tensors() const { return tensors_; }
    std::size_t size() const { return tensors_.size(); }

    const Metadata& metadata() const { return metadata_; }
    Metadata& metadata() { return metadata_; }
    std::string metadata_or(std::string_view key, std::string fallback) const;

    /// Sum of element counts over all tensors.
    std::uint64_t parameter_count() const;

    friend bool operator==(const TensorMap&, const TensorMap&) = default;

private:
    Tensors tensors_;
    Metadata metadata_;
};

struct CheckpointHeader {
    std::vector<TensorSpec> tensors;  // sorted by begin offset
    TensorMap::Metadata metadata;
    std::uint64_t header_size = 0;
    std::uint64_t data_size = 0;
};

/// Validates the container framing and header of an in-memory file.
CheckpointHeader parse_checkpoint_header(std::span<const std::uint8_t> file);

TensorMap decode_checkpoint(std::span<const std::uint8_t> file);
std::vector<std::uint8_t> encode_checkpoint(const TensorMap& map);

TensorMap load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const TensorMap& map, const std::filesystem::path& path);

/// Raw file bytes; Error on I/O failure.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace moeforge
