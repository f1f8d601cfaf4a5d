#include "splitwire/codec.hpp"

#include <cstring>

#include "splitwire/errors.hpp"
#include "splitwire/huffman.hpp"

namespace splitwire {

TensorFrame make_tensor_frame(std::uint32_t frame_id, std::uint16_t split_layer, CodecId codec, const Tensor& tensor,
                              std::optional<QuantParams> quant) {
  TensorFrame f;
  f.frame_id = frame_id;
  f.split_layer = split_layer;
  f.codec = codec;
  f.shape = tensor.shape();
  switch (codec) {
    case CodecId::Float32Raw: {
      f.payload.resize(tensor.size() * sizeof(float));
      std::memcpy(f.payload.data(), tensor.data(), f.payload.size());
      break;
    }
    case CodecId::U8Quant:
    case CodecId::U8QuantHuffman: {
      const QuantParams q = quant ? *quant : estimate_quant_params(tensor.values());
      // Only lo/hi travel; keep the receiver's view of the parameters.
      f.quant = QuantParams::from_interval(q.lo, q.hi);
      f.payload = quantize(tensor, f.quant);
      if (codec == CodecId::U8QuantHuffman) f.payload = entropy_encode(f.payload);
      break;
    }
  }
  return f;
}

Tensor frame_tensor(const TensorFrame& frame) {
  const std::size_t n = element_count(frame.shape);
  switch (frame.codec) {
    case CodecId::Float32Raw: {
      if (frame.payload.size() != n * sizeof(float))
        throw FormatError(FormatError::Kind::LengthMismatch, "float32 payload length does not match shape");
      std::vector<float> values(n);
      std::memcpy(values.data(), frame.payload.data(), frame.payload.size());
      return Tensor(frame.shape, std::move(values));
    }
    case CodecId::U8Quant:
      return dequantize(frame.payload, frame.shape, frame.quant);
    case CodecId::U8QuantHuffman:
      return dequantize(entropy_decode(frame.payload), frame.shape, frame.quant);
  }
  throw FormatError(FormatError::Kind::UnknownCodec, "unknown codec");
}

}  // namespace splitwire
