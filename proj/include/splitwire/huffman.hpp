#pragma once

#include <array>
#include <cstdint>

#include "splitwire/bytes.hpp"
#include "splitwire/quant.hpp"

namespace splitwire {

// Order-0 canonical Huffman stream:
//   decoded_length u32 | 256 x code length u8 | bit-packed codes, MSB-first,
//   zero-padded to a byte boundary.
// Codes are assigned in (length, symbol) order. An input with a single distinct
// symbol codes it with length 1.
inline constexpr std::size_t kHuffmanHeaderBytes = 4 + 256;

using CodeLengths = std::array<std::uint8_t, 256>;

CodeLengths huffman_code_lengths(const Histogram& hist);

Bytes entropy_encode(ByteView data);
Bytes entropy_decode(ByteView stream);

}  // namespace splitwire
