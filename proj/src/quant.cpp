#include "splitwire/quant.hpp"

#include <algorithm>
#include <cmath>

#include "splitwire/errors.hpp"

namespace splitwire {

QuantParams QuantParams::from_stats(double mu, double sigma) {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || sigma < 0.0)
    throw Error("quant params need finite mu and sigma >= 0");
  QuantParams q;
  q.mu = static_cast<float>(mu);
  q.sigma = static_cast<float>(sigma);
  q.lo = static_cast<float>(mu - 3.0 * sigma);
  q.hi = static_cast<float>(mu + 3.0 * sigma);
  return q;
}

QuantParams QuantParams::from_interval(float lo, float hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) throw Error("quant interval must be finite with lo <= hi");
  QuantParams q;
  q.lo = lo;
  q.hi = hi;
  q.mu = static_cast<float>((static_cast<double>(lo) + hi) / 2.0);
  q.sigma = static_cast<float>((static_cast<double>(hi) - lo) / 6.0);
  return q;
}

QuantParams estimate_quant_params(std::span<const float> values) {
  if (values.empty()) throw Error("cannot estimate quantization parameters from no values");
  double sum = 0.0;
  for (float v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (float v : values) sq += (v - mean) * (v - mean);
  return QuantParams::from_stats(mean, std::sqrt(sq / static_cast<double>(values.size())));
}

QuantParams estimate_quant_params(std::span<const Tensor> activations) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const auto& t : activations) {
    n += t.size();
    for (float v : t.values()) sum += v;
  }
  if (n == 0) throw Error("cannot estimate quantization parameters from no values");
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (const auto& t : activations)
    for (float v : t.values()) sq += (v - mean) * (v - mean);
  return QuantParams::from_stats(mean, std::sqrt(sq / static_cast<double>(n)));
}

std::uint8_t quantize_value(double x, const QuantParams& q) noexcept {
  if (q.degenerate() || !(x > q.lo)) return 0;
  if (x >= q.hi) return kQuantLevels;
  const double scaled = (x - q.lo) / (static_cast<double>(q.hi) - q.lo) * kQuantLevels;
  return static_cast<std::uint8_t>(std::clamp(std::round(scaled), 0.0, double(kQuantLevels)));
}

double dequantize_value(std::uint8_t code, const QuantParams& q) noexcept {
  if (q.degenerate()) return q.lo;
  return q.lo + code * ((static_cast<double>(q.hi) - q.lo) / kQuantLevels);
}

Bytes quantize(const Tensor& t, const QuantParams& q) {
  Bytes codes(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) codes[i] = quantize_value(t[i], q);
  return codes;
}

Tensor dequantize(ByteView codes, const Shape& shape, const QuantParams& q) {
  if (codes.size() != element_count(shape))
    throw FormatError(FormatError::Kind::LengthMismatch, "dequantize: " + std::to_string(codes.size()) +
                                                             " codes for shape " + to_string(shape));
  Tensor out(shape);
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = static_cast<float>(dequantize_value(codes[i], q));
  return out;
}

Histogram byte_histogram(ByteView data) {
  Histogram h{};
  for (auto b : data) ++h[b];
  return h;
}

double order0_entropy(const Histogram& hist) {
  std::uint64_t total = 0;
  for (auto c : hist) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : hist)
    if (c) {
      const double p = static_cast<double>(c) / static_cast<double>(total);
      h -= p * std::log2(p);
    }
  return std::max(0.0, h);
}

double order0_entropy(ByteView data) { return order0_entropy(byte_histogram(data)); }

}  // namespace splitwire
