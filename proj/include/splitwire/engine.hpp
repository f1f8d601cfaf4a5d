#pragma once

#include <cstdint>
#include <vector>

#include "splitwire/graph.hpp"
#include "splitwire/tensor.hpp"

namespace splitwire {

// Full pass; element i is layer i's output.
std::vector<Tensor> forward(const ModelGraph& model, const Tensor& input);

// Runs layers from..to given the tensor that feeds layer `from` (the model input
// when from == 0, otherwise the output of layer from-1). from == to + 1 is the
// empty range and returns the boundary unchanged. Both cut points must be valid
// splits.
Tensor forward_range(const ModelGraph& model, const Tensor& boundary_input, std::uint32_t from,
                     std::uint32_t to);

struct LayerFlops {
  std::uint32_t id = 0;
  std::uint64_t flops = 0;
  std::uint64_t cumulative = 0;
};

// 1 MAC = 2 FLOPs; pointwise ops 1 per element; BatchNorm 2 per element
// (scale + shift); MaxPool kh*kw compares per output; GlobalAvgPool H*W adds
// plus one divide per channel; Softmax 5 per element; Flatten 0.
std::vector<LayerFlops> count_flops(const ModelGraph& model);

std::uint64_t layer_flops(const ModelGraph& model, std::uint32_t id);

namespace detail {
// Evaluates one layer; `layer` may carry parameters that differ from the model's
// copy (used while calibrating), but must keep its output shape.
Tensor apply_layer(const ModelGraph& model, const Layer& layer, const Tensor& a, const Tensor* b);
}  // namespace detail

}  // namespace splitwire
