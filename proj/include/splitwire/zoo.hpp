#pragma once

#include <cstdint>
#include <utility>

#include "splitwire/graph.hpp"
#include "splitwire/tensor.hpp"

namespace splitwire {

// Stem Conv3x3(3->8)+BN+ReLU, three residual blocks (8->8, 8->16/2, 16->32/2)
// with projection shortcuts where the shape changes, GlobalAvgPool, Dense 32->10,
// Softmax. Weights are Glorot-uniform from SplitMix64(seed); BatchNorm starts at
// gamma=1, beta=0, mean=0, var=1.
ModelGraph build_microresnet(std::uint64_t seed);

inline constexpr std::uint32_t kNumClasses = 10;

// Input frame perturbation used to model "nearby" frames: a grating phase
// offset plus, when noise_salt != 0, an independent noise draw.
struct Perturbation {
  double phase_shift = 0.0;
  std::uint64_t noise_salt = 0;
};

// Procedural oriented-grating images; a pure function of (seed, index).
struct SyntheticSource {
  std::uint64_t seed = 1;
  std::uint32_t count = 64;
  Shape image_shape = {3, 32, 32};
};

struct LabeledInput {
  Tensor image;
  std::uint32_t label = 0;
};

LabeledInput generate_input(const SyntheticSource& source, std::uint32_t index, const Perturbation& perturbation = {});

// Re-estimates every BatchNorm's running statistics, in topological order, as the
// population mean/variance of its input over the source. Zero-variance channels
// get variance = epsilon.
ModelGraph calibrate_batchnorm(const ModelGraph& model, const SyntheticSource& source);

// True when every BatchNorm still holds its initial statistics (mean 0, var 1).
bool batchnorm_uncalibrated(const ModelGraph& model);

}  // namespace splitwire
