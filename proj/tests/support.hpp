#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitwire/graph.hpp"
#include "splitwire/rng.hpp"
#include "splitwire/tensor.hpp"
#include "splitwire/zoo.hpp"

namespace testing_support {

using namespace splitwire;

// Published identity of build_microresnet(42) before calibration.
inline constexpr std::uint64_t kSeed42Hash = 0x011cb17f852e60dfull;

// The split points MicroResNet must expose: every layer outside a residual block
// plus each block's Add and ReLU, and the classifier head.
inline const std::vector<std::uint32_t> kMicroResNetSplits{0, 1, 2, 8, 9, 17, 18, 26, 27, 28, 29, 30};

inline bool bit_equal(const Tensor& a, const Tensor& b) { return a.bit_equal(b); }

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  SplitMix64 rng(seed);
  Tensor t(shape);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline std::vector<float> random_values(std::size_t n, SplitMix64& rng, double scale = 0.5) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-scale, scale));
  return v;
}

// Seed-42 model with BatchNorm calibrated on the default source (what
// `gen-model --seed 42` writes). Built once per process.
inline const ModelGraph& seed42() {
  static const ModelGraph model = calibrate_batchnorm(build_microresnet(42), SyntheticSource{1, 64, {3, 32, 32}});
  return model;
}

inline Layer conv_layer(std::uint32_t id, std::string name, std::uint32_t in_c, std::uint32_t out_c, std::uint32_t k,
                        std::uint32_t stride, std::uint32_t pad, SplitMix64& rng, std::uint32_t input) {
  Conv2DParams p{in_c, out_c, k, k, stride, pad, random_values(std::size_t(out_c) * in_c * k * k, rng),
                 random_values(out_c, rng)};
  return Layer{id, std::move(name), LayerKind::Conv2D, p, {input}};
}

inline Layer bn_layer(std::uint32_t id, std::string name, std::uint32_t c, SplitMix64& rng, std::uint32_t input) {
  BatchNormParams p;
  p.channels = c;
  p.epsilon = 1e-5f;
  for (std::uint32_t i = 0; i < c; ++i) {
    p.gamma.push_back(static_cast<float>(rng.uniform(0.5, 1.5)));
    p.beta.push_back(static_cast<float>(rng.uniform(-0.5, 0.5)));
    p.mean.push_back(static_cast<float>(rng.uniform(-0.5, 0.5)));
    p.variance.push_back(static_cast<float>(rng.uniform(0.5, 2.0)));
  }
  return Layer{id, std::move(name), LayerKind::BatchNorm, p, {input}};
}

inline Layer simple_layer(std::uint32_t id, std::string name, LayerKind kind, std::vector<std::uint32_t> inputs,
                          LayerParams params = {}) {
  return Layer{id, std::move(name), kind, std::move(params), std::move(inputs)};
}

inline Layer dense_layer(std::uint32_t id, std::string name, std::uint32_t in, std::uint32_t out, SplitMix64& rng,
                         std::uint32_t input) {
  DenseParams p{in, out, random_values(std::size_t(in) * out, rng), random_values(out, rng)};
  return Layer{id, std::move(name), LayerKind::Dense, p, {input}};
}

}  // namespace testing_support
