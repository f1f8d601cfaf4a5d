#include "splitwire/huffman.hpp"

#include <algorithm>
#include <queue>
#include <vector>

#include "splitwire/errors.hpp"

namespace splitwire {

namespace {

constexpr std::uint8_t kMaxCodeLength = 63;

struct Canonical {
  std::vector<std::uint8_t> symbols;             // sorted by (length, symbol)
  std::array<std::uint64_t, 64> first_code{};   // first code of each length
  std::array<std::uint32_t, 64> count{};        // codes per length
  std::array<std::uint32_t, 64> first_index{};  // index into symbols
  std::array<std::uint64_t, 256> code{};
};

Canonical canonicalize(const CodeLengths& lengths) {
  Canonical c;
  for (int s = 0; s < 256; ++s)
    if (lengths[s]) c.symbols.push_back(static_cast<std::uint8_t>(s));
  std::stable_sort(c.symbols.begin(), c.symbols.end(),
                   [&](std::uint8_t a, std::uint8_t b) { return lengths[a] < lengths[b]; });
  std::uint64_t code = 0;
  std::uint8_t prev = 0;
  for (std::size_t i = 0; i < c.symbols.size(); ++i) {
    const auto s = c.symbols[i];
    const auto len = lengths[s];
    if (i > 0) ++code;
    code <<= (len - prev);
    prev = len;
    if (c.count[len]++ == 0) {
      c.first_code[len] = code;
      c.first_index[len] = static_cast<std::uint32_t>(i);
    }
    c.code[s] = code;
  }
  return c;
}

class BitWriter {
 public:
  explicit BitWriter(Bytes& out) : out_(out) {}

  void put(std::uint64_t code, unsigned len) {
    while (len > 0) {
      const unsigned take = std::min(len, 8u - fill_);
      const auto bits = static_cast<std::uint8_t>((code >> (len - take)) & ((1u << take) - 1));
      acc_ = static_cast<std::uint8_t>((acc_ << take) | bits);
      fill_ += take;
      len -= take;
      if (fill_ == 8) {
        out_.push_back(acc_);
        acc_ = 0;
        fill_ = 0;
      }
    }
  }

  void flush() {
    if (fill_) out_.push_back(static_cast<std::uint8_t>(acc_ << (8 - fill_)));
    acc_ = 0;
    fill_ = 0;
  }

 private:
  Bytes& out_;
  std::uint8_t acc_ = 0;
  unsigned fill_ = 0;
};

[[noreturn]] void malformed(const std::string& what) {
  throw FormatError(FormatError::Kind::Malformed, "entropy stream: " + what);
}

}  // namespace

CodeLengths huffman_code_lengths(const Histogram& hist) {
  CodeLengths lengths{};
  struct Node {
    std::uint64_t weight;
    std::uint32_t id;
  };
  auto heavier = [](const Node& a, const Node& b) { return a.weight != b.weight ? a.weight > b.weight : a.id > b.id; };
  std::priority_queue<Node, std::vector<Node>, decltype(heavier)> heap(heavier);

  // parent[i] for leaves 0..255 and internal nodes 256..
  std::vector<std::uint32_t> parent(512, 0);
  int used = 0;
  for (std::uint32_t s = 0; s < 256; ++s)
    if (hist[s]) {
      heap.push({hist[s], s});
      ++used;
    }
  if (used == 0) return lengths;
  if (used == 1) {
    lengths[heap.top().id] = 1;
    return lengths;
  }

  std::uint32_t next = 256;
  while (heap.size() > 1) {
    auto a = heap.top();
    heap.pop();
    auto b = heap.top();
    heap.pop();
    parent[a.id] = next;
    parent[b.id] = next;
    heap.push({a.weight + b.weight, next});
    ++next;
  }
  const std::uint32_t root = next - 1;
  for (std::uint32_t s = 0; s < 256; ++s) {
    if (!hist[s]) continue;
    unsigned depth = 0;
    for (auto n = s; n != root; n = parent[n]) ++depth;
    lengths[s] = static_cast<std::uint8_t>(depth);
  }
  return lengths;
}

Bytes entropy_encode(ByteView data) {
  if (data.empty()) throw Error("entropy_encode: input must not be empty");
  if (data.size() > 0xFFFFFFFFull) throw Error("entropy_encode: input longer than 2^32-1 bytes");

  const auto lengths = huffman_code_lengths(byte_histogram(data));
  const auto canon = canonicalize(lengths);

  Bytes out;
  out.reserve(kHuffmanHeaderBytes + data.size());
  ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.bytes(lengths);
  BitWriter bits(out);
  for (auto s : data) bits.put(canon.code[s], lengths[s]);
  bits.flush();
  return out;
}

Bytes entropy_decode(ByteView stream) {
  ByteReader r(stream);
  if (stream.size() < kHuffmanHeaderBytes) malformed("header truncated");
  const auto n = r.u32();
  CodeLengths lengths{};
  auto table = r.bytes(256);
  std::copy(table.begin(), table.end(), lengths.begin());

  // Kraft inequality, scaled by 2^63.
  std::uint64_t kraft = 0;
  bool any = false;
  for (auto len : lengths) {
    if (len == 0) continue;
    if (len > kMaxCodeLength) malformed("code length " + std::to_string(len) + " exceeds " + std::to_string(kMaxCodeLength));
    any = true;
    kraft += 1ull << (63 - len);
    if (kraft > (1ull << 63)) malformed("code lengths violate the Kraft inequality");
  }
  if (n > 0 && !any) malformed("no codes defined for a non-empty stream");

  const ByteView payload = stream.subspan(kHuffmanHeaderBytes);
  if (n > payload.size() * 8ull) throw FormatError(FormatError::Kind::Truncated, "entropy stream: payload exhausted");

  const auto canon = canonicalize(lengths);
  Bytes out;
  out.reserve(n);
  std::size_t bitpos = 0;
  const std::size_t total_bits = payload.size() * 8;
  while (out.size() < n) {
    std::uint64_t code = 0;
    unsigned len = 0;
    for (;;) {
      if (bitpos >= total_bits) throw FormatError(FormatError::Kind::Truncated, "entropy stream: payload exhausted");
      const unsigned bit = (payload[bitpos >> 3] >> (7 - (bitpos & 7))) & 1u;
      ++bitpos;
      code = (code << 1) | bit;
      ++len;
      if (len > kMaxCodeLength) malformed("invalid code in payload");
      if (canon.count[len] && code >= canon.first_code[len] && code - canon.first_code[len] < canon.count[len]) {
        out.push_back(canon.symbols[canon.first_index[len] + (code - canon.first_code[len])]);
        break;
      }
    }
  }
  if ((bitpos + 7) / 8 != payload.size()) malformed("trailing bytes after payload");
  return out;
}

}  // namespace splitwire
