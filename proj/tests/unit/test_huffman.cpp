#include <doctest.h>

#include <cmath>
#include <random>

#include "splitwire/errors.hpp"
#include "splitwire/huffman.hpp"

using namespace splitwire;

namespace {

// Payload bits implied by the code-length table carried in the stream header.
std::uint64_t payload_bits(const Bytes& stream, const Bytes& data) {
  const Histogram hist = byte_histogram(data);
  std::uint64_t bits = 0;
  for (int s = 0; s < 256; ++s) bits += hist[s] * stream[4 + s];
  return bits;
}

// Kraft sum over the lengths of the symbols that occur; a complete prefix code
// has sum 1 (a lone symbol has sum 1/2).
double kraft(const Bytes& stream) {
  double sum = 0.0;
  for (int s = 0; s < 256; ++s)
    if (stream[4 + s]) sum += std::ldexp(1.0, -stream[4 + s]);
  return sum;
}

Bytes random_bytes(std::mt19937_64& gen, std::size_t n, int alphabet) {
  std::uniform_int_distribution<int> d(0, alphabet - 1);
  Bytes b(n);
  for (auto& x : b) x = std::uint8_t(d(gen));
  return b;
}

}  // namespace

TEST_CASE("100 zero bytes encode to 273 bytes") {
  const Bytes stream = entropy_encode(Bytes(100, 0));
  CHECK(stream.size() == 273);
  CHECK(stream[4] == 1);
  CHECK(entropy_decode(stream) == Bytes(100, 0));
}

TEST_CASE("header layout: little-endian length then 256 code lengths") {
  const Bytes data{5, 5, 9};
  const Bytes stream = entropy_encode(data);
  CHECK(stream[0] == 3);
  CHECK(stream[1] == 0);
  CHECK(stream[4 + 5] == 1);
  CHECK(stream[4 + 9] == 1);
  // Canonical: symbol 5 gets code 0, symbol 9 code 1, so the bits are 0 0 1.
  CHECK(stream[kHuffmanHeaderBytes] == 0b00100000);
  CHECK(stream.size() == kHuffmanHeaderBytes + 1);
}

TEST_CASE("lossless round trip for random lengths 1..4096") {
  std::mt19937_64 gen(11);
  for (std::size_t n = 1; n <= 4096; n = n < 64 ? n + 1 : n * 2 - 1) {
    for (int alphabet : {1, 2, 17, 256}) {
      const Bytes data = random_bytes(gen, n, alphabet);
      CHECK(entropy_decode(entropy_encode(data)) == data);
    }
  }
  const Bytes data = random_bytes(gen, 4096, 256);
  CHECK(entropy_decode(entropy_encode(data)) == data);
}

TEST_CASE("payload size is within Huffman optimality bounds") {
  std::mt19937_64 gen(12);
  std::geometric_distribution<int> skewed(0.3);
  for (int trial = 0; trial < 40; ++trial) {
    Bytes data(1 + trial * 97);
    for (auto& x : data) x = std::uint8_t(std::min(skewed(gen), 255));
    if (trial % 2) data = random_bytes(gen, data.size(), 3 + trial);
    const Bytes stream = entropy_encode(data);
    const double n = double(data.size());
    const double h = order0_entropy(data);
    const auto bits = payload_bits(stream, data);
    CHECK(stream.size() == kHuffmanHeaderBytes + (bits + 7) / 8);
    CHECK(double(bits) >= n * h - 1e-6);
    CHECK(double(bits) <= n * (h + 1) + 1e-6);
    if (std::count(stream.begin() + 4, stream.begin() + 260, 0) < 255) CHECK(kraft(stream) == 1.0);
  }
}

TEST_CASE("code lengths of a skewed histogram") {
  Histogram h{};
  h['a'] = 8;
  h['b'] = 4;
  h['c'] = 2;
  h['d'] = 2;
  const auto lengths = huffman_code_lengths(h);
  CHECK(lengths['a'] == 1);
  CHECK(lengths['b'] == 2);
  CHECK(lengths['c'] == 3);
  CHECK(lengths['d'] == 3);
  CHECK(lengths['e'] == 0);
}

TEST_CASE("malformed streams are rejected") {
  const Bytes good = entropy_encode(Bytes{1, 2, 3, 3, 3, 3});
  SUBCASE("short header") { CHECK_THROWS_AS(entropy_decode(Bytes(good.begin(), good.begin() + 100)), FormatError); }
  SUBCASE("payload exhausted") {
    Bytes bad = good;
    bad[0] = 200;
    CHECK_THROWS_AS(entropy_decode(bad), FormatError);
  }
  SUBCASE("oversubscribed code lengths") {
    Bytes bad = good;
    for (int s = 0; s < 8; ++s) bad[4 + s] = 1;
    CHECK_THROWS_AS(entropy_decode(bad), FormatError);
  }
  SUBCASE("no symbols but a non-zero length") {
    Bytes bad = good;
    std::fill(bad.begin() + 4, bad.begin() + 260, 0);
    CHECK_THROWS_AS(entropy_decode(bad), FormatError);
  }
  SUBCASE("trailing bytes") {
    Bytes bad = good;
    bad.push_back(0);
    bad.push_back(0);
    CHECK_THROWS_AS(entropy_decode(bad), FormatError);
  }
  SUBCASE("empty input cannot be encoded") { CHECK_THROWS_AS(entropy_encode(Bytes{}), Error); }
}
