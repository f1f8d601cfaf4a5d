#include "splitwire/engine.hpp"

#include <cmath>
#include <limits>

#include "splitwire/errors.hpp"

namespace splitwire {

namespace {

// Accumulates each output in ky -> kx -> in_c order. Output channels are the
// innermost loop so independent accumulators can share one pass over the input
// without changing any single output's summation order. Padded taps are skipped.
Tensor conv2d(const Conv2DParams& p, const Tensor& x, const Shape& out_shape) {
  const std::uint32_t in_c = p.in_channels, out_c = p.out_channels;
  const std::uint32_t in_h = x.dim(1), in_w = x.dim(2);
  const std::uint32_t out_h = out_shape[1], out_w = out_shape[2];
  const std::uint32_t kh = p.kernel_h, kw = p.kernel_w;

  // [ky][kx][ic][oc]
  std::vector<float> wt(p.weights.size());
  for (std::uint32_t oc = 0; oc < out_c; ++oc)
    for (std::uint32_t ic = 0; ic < in_c; ++ic)
      for (std::uint32_t ky = 0; ky < kh; ++ky)
        for (std::uint32_t kx = 0; kx < kw; ++kx)
          wt[((std::size_t{ky} * kw + kx) * in_c + ic) * out_c + oc] =
              p.weights[((std::size_t{oc} * in_c + ic) * kh + ky) * kw + kx];

  Tensor out(out_shape);
  std::vector<float> acc(out_c);
  const float* in = x.data();
  const std::size_t plane = std::size_t{in_h} * in_w;
  for (std::uint32_t oy = 0; oy < out_h; ++oy) {
    for (std::uint32_t ox = 0; ox < out_w; ++ox) {
      for (std::uint32_t oc = 0; oc < out_c; ++oc) acc[oc] = p.bias[oc];
      for (std::uint32_t ky = 0; ky < kh; ++ky) {
        const std::int64_t iy = std::int64_t{oy} * p.stride + ky - p.padding;
        if (iy < 0 || iy >= in_h) continue;
        for (std::uint32_t kx = 0; kx < kw; ++kx) {
          const std::int64_t ix = std::int64_t{ox} * p.stride + kx - p.padding;
          if (ix < 0 || ix >= in_w) continue;
          const float* w = wt.data() + (std::size_t{ky} * kw + kx) * in_c * out_c;
          const float* src = in + static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix);
          for (std::uint32_t ic = 0; ic < in_c; ++ic) {
            const float v = src[ic * plane];
            const float* wrow = w + std::size_t{ic} * out_c;
            for (std::uint32_t oc = 0; oc < out_c; ++oc) acc[oc] += wrow[oc] * v;
          }
        }
      }
      for (std::uint32_t oc = 0; oc < out_c; ++oc) out[(std::size_t{oc} * out_h + oy) * out_w + ox] = acc[oc];
    }
  }
  return out;
}

// y = x * scale + shift with scale = gamma / sqrt(var + eps), shift = beta - mean * scale.
Tensor batch_norm(const BatchNormParams& p, const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t inner = x.size() / p.channels;
  for (std::uint32_t c = 0; c < p.channels; ++c) {
    const double denom = std::sqrt(static_cast<double>(p.variance[c]) + static_cast<double>(p.epsilon));
    const float scale = denom > 0.0 ? static_cast<float>(p.gamma[c] / denom) : 0.0f;
    const float shift = static_cast<float>(static_cast<double>(p.beta[c]) - static_cast<double>(p.mean[c]) * scale);
    const float* src = x.data() + c * inner;
    float* dst = out.data() + c * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] * scale + shift;
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor max_pool(const PoolParams& p, const Tensor& x, const Shape& out_shape) {
  const std::uint32_t channels = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
  const std::uint32_t out_h = out_shape[1], out_w = out_shape[2];
  Tensor out(out_shape);
  for (std::uint32_t c = 0; c < channels; ++c)
    for (std::uint32_t oy = 0; oy < out_h; ++oy)
      for (std::uint32_t ox = 0; ox < out_w; ++ox) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::uint32_t ky = 0; ky < p.kernel_h; ++ky) {
          const std::int64_t iy = std::int64_t{oy} * p.stride + ky - p.padding;
          if (iy < 0 || iy >= in_h) continue;
          for (std::uint32_t kx = 0; kx < p.kernel_w; ++kx) {
            const std::int64_t ix = std::int64_t{ox} * p.stride + kx - p.padding;
            if (ix < 0 || ix >= in_w) continue;
            m = std::max(m, x[(std::size_t{c} * in_h + static_cast<std::size_t>(iy)) * in_w + static_cast<std::size_t>(ix)]);
          }
        }
        out[(std::size_t{c} * out_h + oy) * out_w + ox] = m;
      }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  const std::uint32_t channels = x.dim(0);
  const std::size_t plane = std::size_t{x.dim(1)} * x.dim(2);
  Tensor out({channels});
  for (std::uint32_t c = 0; c < channels; ++c) {
    float sum = 0.0f;
    for (std::size_t i = 0; i < plane; ++i) sum += x[c * plane + i];
    out[c] = sum / static_cast<float>(plane);
  }
  return out;
}

Tensor dense(const DenseParams& p, const Tensor& x) {
  Tensor out({p.out_features});
  for (std::uint32_t n = 0; n < p.out_features; ++n) {
    float acc = p.bias[n];
    const float* w = p.weights.data() + std::size_t{n} * p.in_features;
    for (std::uint32_t m = 0; m < p.in_features; ++m) acc += w[m] * x[m];
    out[n] = acc;
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  Tensor out(x.shape());
  float m = -std::numeric_limits<float>::infinity();
  for (float v : x.values()) m = std::max(m, v);
  float sum = 0.0f;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    sum += out[i];
  }
  for (auto& v : out.values()) v /= sum;
  return out;
}

Tensor run_layer(const ModelGraph& model, const Layer& layer, const Tensor& a, const Tensor* b) {
  const Shape& out_shape = model.output_shape(layer.id);
  switch (layer.kind) {
    case LayerKind::Conv2D: return conv2d(std::get<Conv2DParams>(layer.params), a, out_shape);
    case LayerKind::BatchNorm: return batch_norm(std::get<BatchNormParams>(layer.params), a);
    case LayerKind::ReLU: return relu(a);
    case LayerKind::Add: return add(a, *b);
    case LayerKind::MaxPool: return max_pool(std::get<PoolParams>(layer.params), a, out_shape);
    case LayerKind::GlobalAvgPool: return global_avg_pool(a);
    case LayerKind::Dense: return dense(std::get<DenseParams>(layer.params), a);
    case LayerKind::Flatten: return Tensor(out_shape, std::vector<float>(a.values().begin(), a.values().end()));
    case LayerKind::Softmax: return softmax(a);
  }
  throw Error("unknown layer kind");
}

const Shape& boundary_shape(const ModelGraph& model, std::uint32_t from) {
  return from == 0 ? model.input_shape() : model.output_shape(from - 1);
}

// Executes layers [from, to] and returns their activations in order.
std::vector<Tensor> execute(const ModelGraph& model, const Tensor& boundary, std::uint32_t from, std::uint32_t to) {
  if (boundary.shape() != boundary_shape(model, from))
    throw ShapeError("boundary input shape " + to_string(boundary.shape()) + " does not match expected " +
                     to_string(boundary_shape(model, from)));
  if (!boundary.all_finite()) throw Error("input contains non-finite values");

  std::vector<Tensor> acts;
  acts.reserve(to - from + 1);
  auto fetch = [&](std::uint32_t src) -> const Tensor& {
    if (src == kModelInput || src + 1 == from) return boundary;
    return acts[src - from];
  };
  for (std::uint32_t id = from; id <= to; ++id) {
    const Layer& layer = model.layer(id);
    const Tensor& a = fetch(layer.inputs[0]);
    const Tensor* b = layer.inputs.size() > 1 ? &fetch(layer.inputs[1]) : nullptr;
    acts.push_back(run_layer(model, layer, a, b));
  }
  return acts;
}

}  // namespace

namespace detail {
Tensor apply_layer(const ModelGraph& model, const Layer& layer, const Tensor& a, const Tensor* b) {
  return run_layer(model, layer, a, b);
}
}  // namespace detail

std::vector<Tensor> forward(const ModelGraph& model, const Tensor& input) {
  return execute(model, input, 0, model.last());
}

Tensor forward_range(const ModelGraph& model, const Tensor& boundary_input, std::uint32_t from, std::uint32_t to) {
  if (from > model.size() || to > model.last())
    throw InvalidSplitError("invalid split point: layer range [" + std::to_string(from) + ", " + std::to_string(to) +
                            "] outside model");
  if (from > 0 && !model.is_valid_split(from - 1))
    throw InvalidSplitError("invalid split point: cut after layer " + model.layer(from - 1).name +
                            " crosses a residual branch");
  if (from == to + 1) {
    if (boundary_input.shape() != boundary_shape(model, from))
      throw ShapeError("boundary input shape " + to_string(boundary_input.shape()) + " does not match expected " +
                       to_string(boundary_shape(model, from)));
    return boundary_input;
  }
  if (from > to) throw InvalidSplitError("invalid split point: empty or reversed layer range");
  if (!model.is_valid_split(to))
    throw InvalidSplitError("invalid split point: cut after layer " + model.layer(to).name +
                            " crosses a residual branch");
  auto acts = execute(model, boundary_input, from, to);
  return std::move(acts.back());
}

std::uint64_t layer_flops(const ModelGraph& model, std::uint32_t id) {
  const Layer& layer = model.layer(id);
  const Shape& out = model.output_shape(id);
  const std::uint64_t out_n = element_count(out);
  switch (layer.kind) {
    case LayerKind::Conv2D: {
      const auto& p = std::get<Conv2DParams>(layer.params);
      return out_n * 2ull * p.in_channels * p.kernel_h * p.kernel_w;
    }
    case LayerKind::Dense: {
      const auto& p = std::get<DenseParams>(layer.params);
      return 2ull * p.in_features * p.out_features;
    }
    case LayerKind::BatchNorm: return 2 * out_n;
    case LayerKind::ReLU:
    case LayerKind::Add: return out_n;
    case LayerKind::MaxPool: {
      const auto& p = std::get<PoolParams>(layer.params);
      return out_n * p.kernel_h * p.kernel_w;
    }
    case LayerKind::GlobalAvgPool: {
      const Shape& in = layer.inputs[0] == kModelInput ? model.input_shape() : model.output_shape(layer.inputs[0]);
      return element_count(in) + in[0];
    }
    case LayerKind::Flatten: return 0;
    case LayerKind::Softmax: return 5 * out_n;
  }
  return 0;
}

std::vector<LayerFlops> count_flops(const ModelGraph& model) {
  std::vector<LayerFlops> out;
  out.reserve(model.size());
  std::uint64_t cumulative = 0;
  for (std::uint32_t id = 0; id < model.size(); ++id) {
    auto f = layer_flops(model, id);
    cumulative += f;
    out.push_back({id, f, cumulative});
  }
  return out;
}

}  // namespace splitwire
