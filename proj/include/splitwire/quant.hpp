#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "splitwire/bytes.hpp"
#include "splitwire/tensor.hpp"

namespace splitwire {

inline constexpr int kQuantBits = 8;
inline constexpr int kQuantLevels = (1 << kQuantBits) - 1;  // 255

// Clipping interval [mu - 3 sigma, mu + 3 sigma] for 8-bit uniform quantization.
// lo/hi are stored as float because that is what travels on the wire.
struct QuantParams {
  float mu = 0.0f;
  float sigma = 0.0f;
  float lo = 0.0f;
  float hi = 0.0f;

  static QuantParams from_stats(double mu, double sigma);
  static QuantParams from_interval(float lo, float hi);

  bool degenerate() const noexcept { return lo == hi; }
  double step() const noexcept { return (static_cast<double>(hi) - lo) / kQuantLevels; }

  bool operator==(const QuantParams&) const = default;
};

// Population mean and standard deviation over every element of every tensor.
QuantParams estimate_quant_params(std::span<const Tensor> activations);
QuantParams estimate_quant_params(std::span<const float> values);

std::uint8_t quantize_value(double x, const QuantParams& q) noexcept;
double dequantize_value(std::uint8_t code, const QuantParams& q) noexcept;

Bytes quantize(const Tensor& t, const QuantParams& q);
Tensor dequantize(ByteView codes, const Shape& shape, const QuantParams& q);

using Histogram = std::array<std::uint64_t, 256>;

Histogram byte_histogram(ByteView data);
double order0_entropy(const Histogram& hist);
double order0_entropy(ByteView data);

}  // namespace splitwire
