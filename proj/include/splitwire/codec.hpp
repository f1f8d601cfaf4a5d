#pragma once

#include <optional>

#include "splitwire/quant.hpp"
#include "splitwire/tensor.hpp"
#include "splitwire/wire.hpp"

namespace splitwire {

// Packs a tensor into a frame with the given codec. Quantized codecs use `quant`
// when given, otherwise parameters estimated from the tensor itself.
TensorFrame make_tensor_frame(std::uint32_t frame_id, std::uint16_t split_layer, CodecId codec, const Tensor& tensor,
                              std::optional<QuantParams> quant = std::nullopt);

// Reconstructs the tensor carried by a frame (dequantized for u8 codecs).
Tensor frame_tensor(const TensorFrame& frame);

}  // namespace splitwire
