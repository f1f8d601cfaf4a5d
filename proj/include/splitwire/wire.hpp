#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "splitwire/bytes.hpp"
#include "splitwire/quant.hpp"
#include "splitwire/tensor.hpp"

namespace splitwire {

// Every message: "CITF" | version u8 | msg_type u8 | body | crc32 u32, where the
// CRC (IEEE) covers everything after the magic. All fields little-endian.
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kMessageOverhead = 4 + 1 + 1 + 4;
inline constexpr std::uint32_t kMaxPayloadBytes = 64u << 20;
inline constexpr std::size_t kMaxFrameElements = 16u << 20;
inline constexpr std::uint8_t kMaxRank = 8;

enum class MessageType : std::uint8_t {
  TensorFrame = 1,
  ResultFrame = 2,
  Hello = 3,
  HelloAck = 4,
  ConfigUpdate = 5,
  Error = 6,
};

enum class CodecId : std::uint8_t {
  Float32Raw = 0,
  U8Quant = 1,
  U8QuantHuffman = 2,
};

std::string_view codec_name(CodecId codec);  // "f32", "u8", "u8h"
std::optional<CodecId> parse_codec(std::string_view name);
bool has_quant_params(CodecId codec) noexcept;

// split_layer value meaning "the payload is the raw model input" (cloud-only).
inline constexpr std::uint16_t kRawInputSplit = 0xFFFF;

// Body: frame_id u32, split_layer u16, codec u8, ndim u8, dims u32..., [lo f32,
// hi f32 when codec >= 1], payload_len u32, payload.
struct TensorFrame {
  std::uint32_t frame_id = 0;
  std::uint16_t split_layer = 0;
  CodecId codec = CodecId::Float32Raw;
  Shape shape;
  QuantParams quant;  // only lo/hi travel; mu/sigma are derived on decode
  Bytes payload;

  bool operator==(const TensorFrame&) const = default;
};

struct ScoredClass {
  std::uint16_t class_id = 0;
  float score = 0.0f;

  bool operator==(const ScoredClass&) const = default;
};

// Body: frame_id u32, server_compute_us u32, count u8, (class_id u16, score f32)...
struct ResultFrame {
  std::uint32_t frame_id = 0;
  std::uint32_t server_compute_us = 0;
  std::vector<ScoredClass> top_k;

  bool operator==(const ResultFrame&) const = default;
};

// Body: protocol version u8, model_hash u64.
struct Hello {
  std::uint8_t protocol_version = kProtocolVersion;
  std::uint64_t model_hash = 0;

  bool operator==(const Hello&) const = default;
};

// Same body as Hello; echoes the server's model hash.
struct HelloAck {
  std::uint8_t protocol_version = kProtocolVersion;
  std::uint64_t model_hash = 0;

  bool operator==(const HelloAck&) const = default;
};

// Body: split_layer u16, codec u8.
struct ConfigUpdate {
  std::uint16_t split_layer = 0;
  CodecId codec = CodecId::Float32Raw;

  bool operator==(const ConfigUpdate&) const = default;
};

enum class ErrorCode : std::uint8_t {
  HashMismatch = 1,
  Corrupt = 2,
  InvalidSplit = 3,
  Unsupported = 4,
  ProtocolViolation = 5,
  BadFrame = 6,
};

// Body: code u8, message_len u16, UTF-8 message.
struct ErrorMessage {
  std::uint8_t code = 0;
  std::string message;

  bool operator==(const ErrorMessage&) const = default;
};

using Message = std::variant<TensorFrame, ResultFrame, Hello, HelloAck, ConfigUpdate, ErrorMessage>;

MessageType message_type(const Message& msg) noexcept;

Bytes encode_message(const Message& msg);

// Decodes exactly one complete message; trailing bytes are an error.
Message decode_message(ByteView bytes);

Bytes encode_frame(const TensorFrame& frame);
TensorFrame decode_frame(ByteView bytes);

// Wire size of a TensorFrame message minus its payload.
std::size_t tensor_frame_overhead(std::size_t rank, CodecId codec) noexcept;

struct Probe {
  bool complete = false;
  std::size_t size = 0;  // total message size once complete
};

// Inspects a stream prefix and reports the full message length once the length
// fields are available. Throws FormatError as soon as the prefix is invalid.
Probe probe_message(ByteView prefix);

// Splits a byte stream into complete messages.
class MessageReader {
 public:
  void append(ByteView bytes);
  // Next complete raw message, or nullopt when more bytes are needed.
  std::optional<Bytes> next();
  std::size_t buffered() const noexcept { return buffer_.size() - start_; }

 private:
  Bytes buffer_;
  std::size_t start_ = 0;
};

}  // namespace splitwire
