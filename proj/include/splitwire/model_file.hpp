#pragma once

#include <cstdint>
#include <filesystem>

#include "splitwire/bytes.hpp"
#include "splitwire/graph.hpp"

namespace splitwire {

// CIMF layout, all little-endian:
//   "CIMF" | version u8 | input ndim u8 | dims u32... | layer_count u32 |
//   per layer: kind u8, name_len u16, name, input_count u8, inputs u32...,
//              kind metadata (Conv2D: in,out,kh,kw,stride,pad u32;
//              BatchNorm: channels u32, epsilon f32; MaxPool: kh,kw,stride,pad u32;
//              Dense: in,out u32) |
//   weight_count u32 | weights f32... (layer order; conv/dense weights then bias,
//   batchnorm gamma, beta, mean, variance) | model_hash u64 (FNV-1a of all preceding bytes)
inline constexpr std::uint8_t kModelFormatVersion = 1;

Bytes save_model(const ModelGraph& model);
ModelGraph load_model(ByteView bytes);

void save_model_file(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_model_file(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, ByteView bytes);

namespace detail {
// Everything up to (not including) the trailing hash.
Bytes serialize_body(const Shape& input_shape, const std::vector<Layer>& layers);
}  // namespace detail

}  // namespace splitwire
