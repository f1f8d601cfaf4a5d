#pragma once

#include <filesystem>

#include "splitwire/bytes.hpp"
#include "splitwire/tensor.hpp"

namespace splitwire {

// Binary PGM (P5) or PPM (P6), maxval 255, returned as CHW in [0, 1].
Tensor decode_pnm(ByteView bytes);
Tensor read_pnm(const std::filesystem::path& path);

// Adapts a decoded image to a model input shape: grayscale is replicated across
// channels; spatial dims must already match.
Tensor fit_to_input(const Tensor& image, const Shape& input_shape);

}  // namespace splitwire
