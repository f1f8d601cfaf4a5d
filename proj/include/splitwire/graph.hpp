#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "splitwire/tensor.hpp"

namespace splitwire {

enum class LayerKind : std::uint8_t {
  Conv2D = 0,
  BatchNorm = 1,
  ReLU = 2,
  Add = 3,
  MaxPool = 4,
  GlobalAvgPool = 5,
  Dense = 6,
  Flatten = 7,
  Softmax = 8,
};

std::string_view to_string(LayerKind kind);

// Weights are laid out [out_channels][in_channels][kernel_h][kernel_w].
struct Conv2DParams {
  std::uint32_t in_channels = 0;
  std::uint32_t out_channels = 0;
  std::uint32_t kernel_h = 1;
  std::uint32_t kernel_w = 1;
  std::uint32_t stride = 1;
  std::uint32_t padding = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  bool operator==(const Conv2DParams&) const = default;
};

// Inference-mode normalization over dim 0 of the input.
struct BatchNormParams {
  std::uint32_t channels = 0;
  float epsilon = 1e-5f;
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> mean;
  std::vector<float> variance;

  bool operator==(const BatchNormParams&) const = default;
};

struct PoolParams {
  std::uint32_t kernel_h = 2;
  std::uint32_t kernel_w = 2;
  std::uint32_t stride = 2;
  std::uint32_t padding = 0;

  bool operator==(const PoolParams&) const = default;
};

// Weights are laid out [out_features][in_features].
struct DenseParams {
  std::uint32_t in_features = 0;
  std::uint32_t out_features = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  bool operator==(const DenseParams&) const = default;
};

using LayerParams = std::variant<std::monostate, Conv2DParams, BatchNormParams, PoolParams, DenseParams>;

// Producer id that stands for the model input; only layer 0 may use it.
inline constexpr std::uint32_t kModelInput = 0xFFFFFFFFu;

struct Layer {
  std::uint32_t id = 0;
  std::string name;
  LayerKind kind = LayerKind::ReLU;
  LayerParams params;
  std::vector<std::uint32_t> inputs;

  bool operator==(const Layer&) const = default;
};

// Immutable, validated layer DAG in topological order. Construction checks every
// structural invariant and infers all output shapes; a ModelGraph that exists is valid.
class ModelGraph {
 public:
  ModelGraph(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::uint32_t id) const { return layers_.at(id); }
  std::size_t size() const noexcept { return layers_.size(); }
  std::uint32_t last() const noexcept { return static_cast<std::uint32_t>(layers_.size() - 1); }

  const Shape& output_shape(std::uint32_t id) const { return output_shapes_.at(id); }
  const Shape& output_shape() const { return output_shapes_.back(); }

  // Layers whose output is the only value crossing the cut after them. The
  // terminal layer is always included (empty tail).
  const std::vector<std::uint32_t>& valid_splits() const noexcept { return valid_splits_; }
  bool is_valid_split(std::uint32_t id) const;

  std::optional<std::uint32_t> find_layer(std::string_view name) const;

  // Resolves a split by layer name; throws InvalidSplitError listing valid names.
  std::uint32_t split_by_name(std::string_view name) const;
  std::vector<std::string> valid_split_names() const;

  // FNV-1a digest of the canonical serialized form.
  std::uint64_t hash() const noexcept { return hash_; }

  bool operator==(const ModelGraph& other) const {
    return input_shape_ == other.input_shape_ && layers_ == other.layers_;
  }

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> output_shapes_;
  std::vector<std::uint32_t> valid_splits_;
  std::uint64_t hash_ = 0;
};

}  // namespace splitwire
