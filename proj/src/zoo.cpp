#include "splitwire/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/rng.hpp"

namespace splitwire {

namespace {

constexpr float kZeroVarianceFloor = 1e-5f;

class GraphBuilder {
 public:
  explicit GraphBuilder(std::uint64_t seed) : rng_(seed) {}

  std::uint32_t conv(const std::string& name, std::uint32_t input, std::uint32_t in_c, std::uint32_t out_c,
                     std::uint32_t k, std::uint32_t stride) {
    Conv2DParams p;
    p.in_channels = in_c;
    p.out_channels = out_c;
    p.kernel_h = p.kernel_w = k;
    p.stride = stride;
    p.padding = k / 2;
    const double fan_in = double(in_c) * k * k, fan_out = double(out_c) * k * k;
    p.weights = glorot(std::size_t{out_c} * in_c * k * k, fan_in, fan_out);
    p.bias.assign(out_c, 0.0f);
    return push(name, LayerKind::Conv2D, std::move(p), {input});
  }

  std::uint32_t bn(const std::string& name, std::uint32_t input, std::uint32_t channels) {
    BatchNormParams p;
    p.channels = channels;
    p.epsilon = 1e-5f;
    p.gamma.assign(channels, 1.0f);
    p.beta.assign(channels, 0.0f);
    p.mean.assign(channels, 0.0f);
    p.variance.assign(channels, 1.0f);
    return push(name, LayerKind::BatchNorm, std::move(p), {input});
  }

  std::uint32_t dense(const std::string& name, std::uint32_t input, std::uint32_t in, std::uint32_t out) {
    DenseParams p;
    p.in_features = in;
    p.out_features = out;
    p.weights = glorot(std::size_t{in} * out, in, out);
    p.bias.assign(out, 0.0f);
    return push(name, LayerKind::Dense, std::move(p), {input});
  }

  std::uint32_t op(const std::string& name, LayerKind kind, std::vector<std::uint32_t> inputs) {
    return push(name, kind, std::monostate{}, std::move(inputs));
  }

  // Conv-BN-ReLU-Conv-BN main path, optional Conv1x1-BN projection, Add, ReLU.
  std::uint32_t residual_block(const std::string& prefix, std::uint32_t input, std::uint32_t in_c, std::uint32_t out_c,
                               std::uint32_t stride) {
    auto x = conv(prefix + "_conv1", input, in_c, out_c, 3, stride);
    x = bn(prefix + "_bn1", x, out_c);
    x = op(prefix + "_relu1", LayerKind::ReLU, {x});
    x = conv(prefix + "_conv2", x, out_c, out_c, 3, 1);
    x = bn(prefix + "_bn2", x, out_c);
    auto shortcut = input;
    if (in_c != out_c || stride != 1) {
      shortcut = conv(prefix + "_proj_conv", input, in_c, out_c, 1, stride);
      shortcut = bn(prefix + "_proj_bn", shortcut, out_c);
    }
    auto sum = op(prefix + "_add", LayerKind::Add, {x, shortcut});
    return op(prefix + "_relu", LayerKind::ReLU, {sum});
  }

  std::vector<Layer> take() { return std::move(layers_); }

 private:
  std::vector<float> glorot(std::size_t n, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<float> w(n);
    for (auto& v : w) v = static_cast<float>(rng_.uniform(-limit, limit));
    return w;
  }

  std::uint32_t push(const std::string& name, LayerKind kind, LayerParams params, std::vector<std::uint32_t> inputs) {
    Layer layer;
    layer.id = static_cast<std::uint32_t>(layers_.size());
    layer.name = name;
    layer.kind = kind;
    layer.params = std::move(params);
    layer.inputs = std::move(inputs);
    layers_.push_back(std::move(layer));
    return layers_.back().id;
  }

  SplitMix64 rng_;
  std::vector<Layer> layers_;
};

}  // namespace

ModelGraph build_microresnet(std::uint64_t seed) {
  GraphBuilder g(seed);
  auto x = g.conv("stem_conv", kModelInput, 3, 8, 3, 1);
  x = g.bn("stem_bn", x, 8);
  x = g.op("stem_relu", LayerKind::ReLU, {x});
  x = g.residual_block("block1", x, 8, 8, 1);
  x = g.residual_block("block2", x, 8, 16, 2);
  x = g.residual_block("block3", x, 16, 32, 2);
  x = g.op("gap", LayerKind::GlobalAvgPool, {x});
  x = g.dense("fc", x, 32, kNumClasses);
  g.op("softmax", LayerKind::Softmax, {x});
  return ModelGraph({3, 32, 32}, g.take());
}

LabeledInput generate_input(const SyntheticSource& source, std::uint32_t index, const Perturbation& perturbation) {
  if (index >= source.count)
    throw Error("synthetic input index " + std::to_string(index) + " out of range (count " +
                std::to_string(source.count) + ")");
  if (source.image_shape.size() != 3) throw ShapeError("synthetic images must be CHW");

  SplitMix64 rng(mix_seed(source.seed, index));
  const auto label = static_cast<std::uint32_t>(rng() % kNumClasses);
  const double theta = std::numbers::pi * (label + rng.uniform()) / kNumClasses;
  const double freq = rng.uniform(0.08, 0.25);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi) + perturbation.phase_shift;
  const double contrast = rng.uniform(0.25, 0.45);
  const std::uint32_t channels = source.image_shape[0], h = source.image_shape[1], w = source.image_shape[2];
  std::vector<double> tint(channels);
  for (auto& t : tint) t = rng.uniform(0.5, 1.0);
  SplitMix64 noise(mix_seed(rng(), perturbation.noise_salt));

  const double ct = std::cos(theta), st = std::sin(theta);
  Tensor image(source.image_shape);
  for (std::uint32_t c = 0; c < channels; ++c)
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) {
        const double wave = std::sin(2.0 * std::numbers::pi * freq * (x * ct + y * st) + phase);
        const double v = 0.5 + contrast * tint[c] * wave + noise.uniform(-0.06, 0.06);
        image[(std::size_t{c} * h + y) * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return {std::move(image), label};
}

ModelGraph calibrate_batchnorm(const ModelGraph& model, const SyntheticSource& source) {
  if (source.count < 16) throw Error("batchnorm calibration needs at least 16 inputs");
  if (source.image_shape != model.input_shape())
    throw ShapeError("calibration image shape " + to_string(source.image_shape) + " does not match model input " +
                     to_string(model.input_shape()));

  std::vector<Layer> layers = model.layers();
  const std::size_t n = source.count;

  // Last consumer of each activation, so the batch can drop tensors early.
  std::vector<std::uint32_t> last_use(layers.size(), 0);
  for (const auto& layer : layers)
    for (auto src : layer.inputs)
      if (src != kModelInput) last_use[src] = std::max(last_use[src], layer.id);

  std::vector<Tensor> inputs(n);
  for (std::uint32_t i = 0; i < n; ++i) inputs[i] = generate_input(source, i).image;

  // acts[layer][image]
  std::vector<std::vector<Tensor>> acts(layers.size());
  auto fetch = [&](std::uint32_t src, std::size_t i) -> const Tensor& {
    return src == kModelInput ? inputs[i] : acts[src][i];
  };

  for (auto& layer : layers) {
    if (auto* bn = std::get_if<BatchNormParams>(&layer.params)) {
      const std::size_t inner = element_count(model.output_shape(layer.id)) / bn->channels;
      for (std::uint32_t c = 0; c < bn->channels; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const float* x = fetch(layer.inputs[0], i).data() + c * inner;
          for (std::size_t j = 0; j < inner; ++j) sum += x[j];
        }
        const double mean = sum / static_cast<double>(n * inner);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const float* x = fetch(layer.inputs[0], i).data() + c * inner;
          for (std::size_t j = 0; j < inner; ++j) sq += (x[j] - mean) * (x[j] - mean);
        }
        const double var = sq / static_cast<double>(n * inner);
        bn->mean[c] = static_cast<float>(mean);
        bn->variance[c] = var > 0.0 ? static_cast<float>(var) : kZeroVarianceFloor;
      }
    }

    acts[layer.id].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& a = fetch(layer.inputs[0], i);
      const Tensor* b = layer.inputs.size() > 1 ? &fetch(layer.inputs[1], i) : nullptr;
      acts[layer.id][i] = detail::apply_layer(model, layer, a, b);
    }
    for (auto src : layer.inputs)
      if (src != kModelInput && last_use[src] == layer.id) acts[src] = {};
  }
  return ModelGraph(model.input_shape(), std::move(layers));
}

bool batchnorm_uncalibrated(const ModelGraph& model) {
  for (const auto& layer : model.layers())
    if (const auto* bn = std::get_if<BatchNormParams>(&layer.params)) {
      for (auto m : bn->mean)
        if (m != 0.0f) return false;
      for (auto v : bn->variance)
        if (v != 1.0f) return false;
    }
  return true;
}

}  // namespace splitwire
