#include "splitwire/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "splitwire/errors.hpp"
#include "splitwire/model_file.hpp"

namespace splitwire {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Add: return "Add";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Softmax: return "Softmax";
  }
  return "?";
}

namespace {

[[noreturn]] void invalid(const Layer& layer, const std::string& what) {
  throw ShapeError("layer " + std::to_string(layer.id) + " (" + layer.name + "): " + what);
}

template <typename P>
const P& params_as(const Layer& layer) {
  const auto* p = std::get_if<P>(&layer.params);
  if (!p) invalid(layer, "parameters do not match kind " + std::string(to_string(layer.kind)));
  return *p;
}

std::uint32_t pooled_extent(const Layer& layer, std::uint32_t in, std::uint32_t k, std::uint32_t stride,
                            std::uint32_t pad) {
  if (stride == 0 || k == 0) invalid(layer, "kernel and stride must be positive");
  auto padded = std::uint64_t{in} + 2ull * pad;
  if (padded < k) invalid(layer, "kernel larger than padded input");
  return static_cast<std::uint32_t>((padded - k) / stride + 1);
}

Shape infer_shape(const Layer& layer, const std::vector<const Shape*>& in) {
  const Shape& x = *in[0];
  switch (layer.kind) {
    case LayerKind::Conv2D: {
      const auto& p = params_as<Conv2DParams>(layer);
      if (x.size() != 3 || x[0] != p.in_channels)
        invalid(layer, "expects input [" + std::to_string(p.in_channels) + "xHxW], got " + to_string(x));
      if (p.out_channels == 0) invalid(layer, "out_channels must be positive");
      if (p.weights.size() != std::size_t{p.out_channels} * p.in_channels * p.kernel_h * p.kernel_w)
        invalid(layer, "weight count mismatch");
      if (p.bias.size() != p.out_channels) invalid(layer, "bias count mismatch");
      return {p.out_channels, pooled_extent(layer, x[1], p.kernel_h, p.stride, p.padding),
              pooled_extent(layer, x[2], p.kernel_w, p.stride, p.padding)};
    }
    case LayerKind::BatchNorm: {
      const auto& p = params_as<BatchNormParams>(layer);
      if (x.empty() || x[0] != p.channels)
        invalid(layer, "expects " + std::to_string(p.channels) + " channels, got " + to_string(x));
      if (p.gamma.size() != p.channels || p.beta.size() != p.channels || p.mean.size() != p.channels ||
          p.variance.size() != p.channels)
        invalid(layer, "statistics count mismatch");
      if (!(p.epsilon >= 0.0f)) invalid(layer, "epsilon must be non-negative");
      return x;
    }
    case LayerKind::ReLU:
    case LayerKind::Softmax:
      return x;
    case LayerKind::Add:
      if (*in[0] != *in[1]) invalid(layer, "operand shapes differ: " + to_string(*in[0]) + " vs " + to_string(*in[1]));
      return x;
    case LayerKind::MaxPool: {
      const auto& p = params_as<PoolParams>(layer);
      if (x.size() != 3) invalid(layer, "expects CHW input, got " + to_string(x));
      if (p.padding >= p.kernel_h || p.padding >= p.kernel_w) invalid(layer, "padding must be smaller than the kernel");
      return {x[0], pooled_extent(layer, x[1], p.kernel_h, p.stride, p.padding),
              pooled_extent(layer, x[2], p.kernel_w, p.stride, p.padding)};
    }
    case LayerKind::GlobalAvgPool:
      if (x.size() != 3) invalid(layer, "expects CHW input, got " + to_string(x));
      return {x[0]};
    case LayerKind::Dense: {
      const auto& p = params_as<DenseParams>(layer);
      if (element_count(x) != p.in_features)
        invalid(layer, "expects " + std::to_string(p.in_features) + " inputs, got " + to_string(x));
      if (p.out_features == 0) invalid(layer, "out_features must be positive");
      if (p.weights.size() != std::size_t{p.out_features} * p.in_features) invalid(layer, "weight count mismatch");
      if (p.bias.size() != p.out_features) invalid(layer, "bias count mismatch");
      return {p.out_features};
    }
    case LayerKind::Flatten:
      return {static_cast<std::uint32_t>(element_count(x))};
  }
  invalid(layer, "unknown kind");
}

bool params_match_kind(const Layer& layer) {
  switch (layer.kind) {
    case LayerKind::Conv2D: return std::holds_alternative<Conv2DParams>(layer.params);
    case LayerKind::BatchNorm: return std::holds_alternative<BatchNormParams>(layer.params);
    case LayerKind::MaxPool: return std::holds_alternative<PoolParams>(layer.params);
    case LayerKind::Dense: return std::holds_alternative<DenseParams>(layer.params);
    default: return std::holds_alternative<std::monostate>(layer.params);
  }
}

}  // namespace

ModelGraph::ModelGraph(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty() || input_shape_.size() > 8) throw ShapeError("model input rank must be 1..8");
  for (auto d : input_shape_)
    if (d == 0) throw ShapeError("model input dims must be positive");
  if (layers_.empty()) throw ShapeError("model has no layers");

  std::set<std::string, std::less<>> names;
  std::vector<bool> consumed(layers_.size(), false);
  output_shapes_.reserve(layers_.size());

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    if (layer.id != i) invalid(layer, "ids must be dense and in order");
    if (layer.name.empty() || layer.name.size() > 255) invalid(layer, "name must be 1..255 bytes");
    if (!names.insert(layer.name).second) invalid(layer, "duplicate name");
    if (!params_match_kind(layer)) invalid(layer, "parameters do not match kind");

    const std::size_t arity = layer.kind == LayerKind::Add ? 2 : 1;
    if (layer.inputs.size() != arity) invalid(layer, "expects " + std::to_string(arity) + " inputs");

    std::vector<const Shape*> in;
    for (auto src : layer.inputs) {
      if (src == kModelInput) {
        if (i != 0) invalid(layer, "only layer 0 may read the model input");
        in.push_back(&input_shape_);
      } else {
        if (src >= i) invalid(layer, "inputs must reference earlier layers");
        consumed[src] = true;
        in.push_back(&output_shapes_[src]);
      }
    }
    if (i == 0 && layer.inputs != std::vector<std::uint32_t>{kModelInput})
      invalid(layer, "layer 0 must read the model input");
    output_shapes_.push_back(infer_shape(layer, in));
  }

  for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
    if (!consumed[i]) invalid(layers_[i], "output is unused; a model has exactly one terminal layer");

  // A cut after k is valid when the only producer <= k read by a consumer > k is k itself.
  std::vector<std::uint32_t> max_consumer(layers_.size(), 0);
  for (const auto& layer : layers_)
    for (auto src : layer.inputs)
      if (src != kModelInput) max_consumer[src] = std::max(max_consumer[src], layer.id);
  std::uint32_t reach = 0;  // max consumer over producers 0..k-1
  for (std::uint32_t k = 0; k < layers_.size(); ++k) {
    if (reach <= k) valid_splits_.push_back(k);
    reach = std::max(reach, max_consumer[k]);
  }

  hash_ = fnv1a64(detail::serialize_body(input_shape_, layers_));
}

bool ModelGraph::is_valid_split(std::uint32_t id) const {
  return std::binary_search(valid_splits_.begin(), valid_splits_.end(), id);
}

std::optional<std::uint32_t> ModelGraph::find_layer(std::string_view name) const {
  for (const auto& layer : layers_)
    if (layer.name == name) return layer.id;
  return std::nullopt;
}

std::vector<std::string> ModelGraph::valid_split_names() const {
  std::vector<std::string> out;
  for (auto k : valid_splits_) out.push_back(layers_[k].name);
  return out;
}

std::uint32_t ModelGraph::split_by_name(std::string_view name) const {
  auto id = find_layer(name);
  if (id && is_valid_split(*id)) return *id;
  std::ostringstream os;
  os << "invalid split point '" << name << "'; valid splits:";
  for (const auto& n : valid_split_names()) os << ' ' << n;
  throw InvalidSplitError(os.str());
}

}  // namespace splitwire
