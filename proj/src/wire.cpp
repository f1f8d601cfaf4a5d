#include "splitwire/wire.hpp"

#include <cmath>
#include <cstring>

#include "splitwire/errors.hpp"
#include "splitwire/huffman.hpp"

namespace splitwire {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'I', 'T', 'F'};
constexpr std::size_t kHeaderBytes = 6;

[[noreturn]] void fail(FormatError::Kind kind, const std::string& what) { throw FormatError(kind, what); }

CodecId checked_codec(std::uint8_t v) {
  if (v > static_cast<std::uint8_t>(CodecId::U8QuantHuffman)) fail(FormatError::Kind::UnknownCodec, "unknown codec " + std::to_string(v));
  return static_cast<CodecId>(v);
}

MessageType checked_type(std::uint8_t v) {
  if (v < 1 || v > 6) fail(FormatError::Kind::UnknownMessageType, "unknown message type " + std::to_string(v));
  return static_cast<MessageType>(v);
}

void write_body(ByteWriter& w, const TensorFrame& f) {
  if (f.shape.empty() || f.shape.size() > kMaxRank) throw Error("tensor frame rank must be 1..8");
  if (f.payload.size() > kMaxPayloadBytes) throw Error("tensor frame payload too large");
  w.u32(f.frame_id);
  w.u16(f.split_layer);
  w.u8(static_cast<std::uint8_t>(f.codec));
  w.u8(static_cast<std::uint8_t>(f.shape.size()));
  for (auto d : f.shape) w.u32(d);
  if (has_quant_params(f.codec)) {
    w.f32(f.quant.lo);
    w.f32(f.quant.hi);
  }
  w.u32(static_cast<std::uint32_t>(f.payload.size()));
  w.bytes(f.payload);
}

void write_body(ByteWriter& w, const ResultFrame& r) {
  if (r.top_k.size() > 255) throw Error("result frame carries at most 255 classes");
  w.u32(r.frame_id);
  w.u32(r.server_compute_us);
  w.u8(static_cast<std::uint8_t>(r.top_k.size()));
  for (const auto& s : r.top_k) {
    w.u16(s.class_id);
    w.f32(s.score);
  }
}

void write_body(ByteWriter& w, const Hello& h) {
  w.u8(h.protocol_version);
  w.u64(h.model_hash);
}

void write_body(ByteWriter& w, const HelloAck& h) {
  w.u8(h.protocol_version);
  w.u64(h.model_hash);
}

void write_body(ByteWriter& w, const ConfigUpdate& c) {
  w.u16(c.split_layer);
  w.u8(static_cast<std::uint8_t>(c.codec));
}

void write_body(ByteWriter& w, const ErrorMessage& e) {
  const auto len = std::min<std::size_t>(e.message.size(), 0xFFFF);
  w.u8(e.code);
  w.u16(static_cast<std::uint16_t>(len));
  w.str(std::string_view(e.message).substr(0, len));
}

TensorFrame read_tensor_frame(ByteReader& r) {
  TensorFrame f;
  f.frame_id = r.u32();
  f.split_layer = r.u16();
  f.codec = checked_codec(r.u8());
  const auto rank = r.u8();
  if (rank == 0 || rank > kMaxRank) fail(FormatError::Kind::Malformed, "tensor frame rank " + std::to_string(rank));
  f.shape.resize(rank);
  std::uint64_t n = 1;
  for (auto& d : f.shape) {
    d = r.u32();
    if (d == 0) fail(FormatError::Kind::Malformed, "tensor frame has a zero dimension");
    n *= d;
    if (n > kMaxFrameElements) fail(FormatError::Kind::TooLarge, "tensor frame has too many elements");
  }
  if (has_quant_params(f.codec)) {
    const float lo = r.f32(), hi = r.f32();
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) fail(FormatError::Kind::Malformed, "invalid quantization interval");
    f.quant = QuantParams::from_interval(lo, hi);
  }
  const auto len = r.u32();
  if (len > kMaxPayloadBytes) fail(FormatError::Kind::TooLarge, "tensor frame payload too large");
  auto payload = r.bytes(len);
  f.payload.assign(payload.begin(), payload.end());

  switch (f.codec) {
    case CodecId::Float32Raw:
      if (len != n * 4) fail(FormatError::Kind::LengthMismatch, "float32 payload length does not match shape");
      break;
    case CodecId::U8Quant:
      if (len != n) fail(FormatError::Kind::LengthMismatch, "u8 payload length does not match shape");
      break;
    case CodecId::U8QuantHuffman: {
      if (len < kHuffmanHeaderBytes) fail(FormatError::Kind::LengthMismatch, "entropy payload shorter than its header");
      std::uint32_t decoded;
      std::memcpy(&decoded, f.payload.data(), 4);
      if (decoded != n) fail(FormatError::Kind::LengthMismatch, "entropy payload length does not match shape");
      break;
    }
  }
  return f;
}

ResultFrame read_result_frame(ByteReader& r) {
  ResultFrame f;
  f.frame_id = r.u32();
  f.server_compute_us = r.u32();
  f.top_k.resize(r.u8());
  for (auto& s : f.top_k) {
    s.class_id = r.u16();
    s.score = r.f32();
  }
  return f;
}

// Bytes needed after the 6-byte header for a message of the given type, given
// what is available; returns 0 when more input is needed to decide.
std::size_t body_extent(MessageType type, ByteView body) {
  ByteReader r(body);
  auto have = [&](std::size_t n) { return r.remaining() >= n; };
  switch (type) {
    case MessageType::TensorFrame: {
      if (!have(8)) return 0;
      r.u32();
      r.u16();
      const auto codec = checked_codec(r.u8());
      const auto rank = r.u8();
      if (rank == 0 || rank > kMaxRank) fail(FormatError::Kind::Malformed, "tensor frame rank " + std::to_string(rank));
      const std::size_t fixed = 4u * rank + (has_quant_params(codec) ? 8u : 0u);
      if (!have(fixed + 4)) return 0;
      r.bytes(fixed);
      const auto len = r.u32();
      if (len > kMaxPayloadBytes) fail(FormatError::Kind::TooLarge, "tensor frame payload too large");
      return 8 + fixed + 4 + len;
    }
    case MessageType::ResultFrame: {
      if (!have(9)) return 0;
      r.bytes(8);
      return 9 + 6u * r.u8();
    }
    case MessageType::Hello:
    case MessageType::HelloAck:
      return 9;
    case MessageType::ConfigUpdate:
      return 3;
    case MessageType::Error: {
      if (!have(3)) return 0;
      r.u8();
      return 3 + r.u16();
    }
  }
  return 0;
}

}  // namespace

std::string_view codec_name(CodecId codec) {
  switch (codec) {
    case CodecId::Float32Raw: return "f32";
    case CodecId::U8Quant: return "u8";
    case CodecId::U8QuantHuffman: return "u8h";
  }
  return "?";
}

std::optional<CodecId> parse_codec(std::string_view name) {
  if (name == "f32") return CodecId::Float32Raw;
  if (name == "u8") return CodecId::U8Quant;
  if (name == "u8h") return CodecId::U8QuantHuffman;
  return std::nullopt;
}

bool has_quant_params(CodecId codec) noexcept { return codec != CodecId::Float32Raw; }

MessageType message_type(const Message& msg) noexcept { return static_cast<MessageType>(msg.index() + 1); }

Bytes encode_message(const Message& msg) {
  Bytes out;
  ByteWriter w(out);
  w.bytes(kMagic);
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(message_type(msg)));
  std::visit([&](const auto& m) { write_body(w, m); }, msg);
  w.u32(crc32(ByteView(out).subspan(4)));
  return out;
}

Message decode_message(ByteView bytes) {
  const Probe probe = probe_message(bytes);
  if (!probe.complete) fail(FormatError::Kind::Truncated, "message truncated");
  if (probe.size != bytes.size()) fail(FormatError::Kind::Malformed, "trailing bytes after message");

  const auto crc_pos = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + crc_pos, 4);
  if (crc32(bytes.subspan(4, crc_pos - 4)) != stored) fail(FormatError::Kind::BadCrc, "message CRC mismatch");

  ByteReader r(bytes.subspan(kHeaderBytes, crc_pos - kHeaderBytes));
  Message msg;
  switch (checked_type(bytes[5])) {
    case MessageType::TensorFrame: msg = read_tensor_frame(r); break;
    case MessageType::ResultFrame: msg = read_result_frame(r); break;
    case MessageType::Hello: {
      Hello h;
      h.protocol_version = r.u8();
      h.model_hash = r.u64();
      msg = h;
      break;
    }
    case MessageType::HelloAck: {
      HelloAck h;
      h.protocol_version = r.u8();
      h.model_hash = r.u64();
      msg = h;
      break;
    }
    case MessageType::ConfigUpdate: {
      ConfigUpdate c;
      c.split_layer = r.u16();
      c.codec = checked_codec(r.u8());
      msg = c;
      break;
    }
    case MessageType::Error: {
      ErrorMessage e;
      e.code = r.u8();
      e.message = r.str(r.u16());
      msg = e;
      break;
    }
  }
  if (!r.done()) fail(FormatError::Kind::Malformed, "message body has trailing bytes");
  return msg;
}

Bytes encode_frame(const TensorFrame& frame) { return encode_message(frame); }

TensorFrame decode_frame(ByteView bytes) {
  auto msg = decode_message(bytes);
  if (auto* f = std::get_if<TensorFrame>(&msg)) return std::move(*f);
  fail(FormatError::Kind::UnknownMessageType, "expected a tensor frame");
}

std::size_t tensor_frame_overhead(std::size_t rank, CodecId codec) noexcept {
  return kMessageOverhead + 4 + 2 + 1 + 1 + 4 * rank + (has_quant_params(codec) ? 8 : 0) + 4;
}

Probe probe_message(ByteView prefix) {
  const std::size_t n = std::min<std::size_t>(prefix.size(), 4);
  if (std::memcmp(prefix.data(), kMagic, n) != 0) fail(FormatError::Kind::BadMagic, "bad message magic");
  if (prefix.size() < 5) return {};
  if (prefix[4] != kProtocolVersion)
    fail(FormatError::Kind::VersionMismatch, "unsupported protocol version " + std::to_string(prefix[4]));
  if (prefix.size() < kHeaderBytes) return {};
  const auto type = checked_type(prefix[5]);
  const auto body = body_extent(type, prefix.subspan(kHeaderBytes));
  if (body == 0) return {};
  const std::size_t total = kHeaderBytes + body + 4;
  return {prefix.size() >= total, total};
}

void MessageReader::append(ByteView bytes) {
  if (start_ > 0 && start_ == buffer_.size()) {
    buffer_.clear();
    start_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Bytes> MessageReader::next() {
  ByteView pending(buffer_.data() + start_, buffer_.size() - start_);
  if (pending.empty()) return std::nullopt;
  const auto probe = probe_message(pending);
  if (!probe.complete) return std::nullopt;
  Bytes msg(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(probe.size));
  start_ += probe.size;
  if (start_ > (1u << 20) && start_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(start_));
    start_ = 0;
  }
  return msg;
}

}  // namespace splitwire
