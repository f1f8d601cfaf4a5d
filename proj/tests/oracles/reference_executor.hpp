#pragma once

// Independent scalar reference for the engine. Every arithmetic operation goes
// through Counter so the FLOP total is measured, not computed from a formula.
// Padded convolution taps are evaluated as multiplications by zero, so they are
// counted like every other tap.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "splitwire/graph.hpp"
#include "splitwire/tensor.hpp"

namespace oracle {

using splitwire::Tensor;

struct Counter {
  std::uint64_t ops = 0;
  float mul(float a, float b) { ++ops; return a * b; }
  float add(float a, float b) { ++ops; return a + b; }
  float sub(float a, float b) { ++ops; return a - b; }
  float div(float a, float b) { ++ops; return a / b; }
  float max(float a, float b) { ++ops; return a > b ? a : b; }
  float exp(float a) { ++ops; return std::exp(a); }
};

// Direct convolution, accumulating each output as bias + sum over ky, kx, ic (in
// that order). Weight layout [oc][ic][ky][kx].
inline Tensor naive_conv(const splitwire::Conv2DParams& p, const Tensor& x, Counter* counter = nullptr) {
  Counter local;
  Counter& c = counter ? *counter : local;
  const long in_h = x.dim(1), in_w = x.dim(2);
  const long out_h = (in_h + 2 * long(p.padding) - long(p.kernel_h)) / long(p.stride) + 1;
  const long out_w = (in_w + 2 * long(p.padding) - long(p.kernel_w)) / long(p.stride) + 1;
  Tensor out({p.out_channels, std::uint32_t(out_h), std::uint32_t(out_w)});
  for (std::uint32_t oc = 0; oc < p.out_channels; ++oc)
    for (long oy = 0; oy < out_h; ++oy)
      for (long ox = 0; ox < out_w; ++ox) {
        float acc = p.bias[oc];
        for (std::uint32_t ky = 0; ky < p.kernel_h; ++ky)
          for (std::uint32_t kx = 0; kx < p.kernel_w; ++kx)
            for (std::uint32_t ic = 0; ic < p.in_channels; ++ic) {
              const long iy = oy * long(p.stride) + long(ky) - long(p.padding);
              const long ix = ox * long(p.stride) + long(kx) - long(p.padding);
              const bool inside = iy >= 0 && iy < in_h && ix >= 0 && ix < in_w;
              const float v = inside ? x[(std::size_t(ic) * in_h + iy) * in_w + ix] : 0.0f;
              const float w = p.weights[((std::size_t(oc) * p.in_channels + ic) * p.kernel_h + ky) * p.kernel_w + kx];
              acc = c.add(acc, c.mul(w, v));
            }
        out[(std::size_t(oc) * out_h + oy) * out_w + ox] = acc;
      }
  return out;
}

inline Tensor eval_layer(const splitwire::ModelGraph& model, const splitwire::Layer& layer, const Tensor& a,
                         const Tensor* b, Counter& c) {
  using splitwire::LayerKind;
  switch (layer.kind) {
    case LayerKind::Conv2D: return naive_conv(std::get<splitwire::Conv2DParams>(layer.params), a, &c);
    case LayerKind::BatchNorm: {
      const auto& p = std::get<splitwire::BatchNormParams>(layer.params);
      Tensor out(a.shape());
      const std::size_t plane = a.size() / p.channels;
      for (std::uint32_t ch = 0; ch < p.channels; ++ch) {
        const double inv = 1.0 / std::sqrt(double(p.variance[ch]) + double(p.epsilon));
        const float scale = float(double(p.gamma[ch]) * inv);
        const float shift = float(double(p.beta[ch]) - double(p.mean[ch]) * double(scale));
        for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = c.add(c.mul(a[ch * plane + i], scale), shift);
      }
      return out;
    }
    case LayerKind::ReLU: {
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = c.max(a[i], 0.0f);
      return out;
    }
    case LayerKind::Add: {
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = c.add(a[i], (*b)[i]);
      return out;
    }
    case LayerKind::MaxPool: {
      const auto& p = std::get<splitwire::PoolParams>(layer.params);
      const auto& shape = model.output_shape(layer.id);
      const long in_h = a.dim(1), in_w = a.dim(2);
      Tensor out(shape);
      for (std::uint32_t ch = 0; ch < shape[0]; ++ch)
        for (long oy = 0; oy < long(shape[1]); ++oy)
          for (long ox = 0; ox < long(shape[2]); ++ox) {
            float m = -std::numeric_limits<float>::infinity();
            for (std::uint32_t ky = 0; ky < p.kernel_h; ++ky)
              for (std::uint32_t kx = 0; kx < p.kernel_w; ++kx) {
                const long iy = oy * long(p.stride) + long(ky) - long(p.padding);
                const long ix = ox * long(p.stride) + long(kx) - long(p.padding);
                const bool inside = iy >= 0 && iy < in_h && ix >= 0 && ix < in_w;
                m = c.max(m, inside ? a[(std::size_t(ch) * in_h + iy) * in_w + ix]
                                    : -std::numeric_limits<float>::infinity());
              }
            out[(std::size_t(ch) * shape[1] + oy) * shape[2] + ox] = m;
          }
      return out;
    }
    case LayerKind::GlobalAvgPool: {
      const std::uint32_t ch = a.dim(0);
      const std::size_t plane = a.size() / ch;
      Tensor out({ch});
      for (std::uint32_t k = 0; k < ch; ++k) {
        float s = 0.0f;
        for (std::size_t i = 0; i < plane; ++i) s = c.add(s, a[k * plane + i]);
        out[k] = c.div(s, float(plane));
      }
      return out;
    }
    case LayerKind::Dense: {
      const auto& p = std::get<splitwire::DenseParams>(layer.params);
      Tensor out({p.out_features});
      for (std::uint32_t o = 0; o < p.out_features; ++o) {
        float acc = p.bias[o];
        for (std::uint32_t i = 0; i < p.in_features; ++i)
          acc = c.add(acc, c.mul(p.weights[std::size_t(o) * p.in_features + i], a[i]));
        out[o] = acc;
      }
      return out;
    }
    case LayerKind::Flatten:
      return Tensor({std::uint32_t(a.size())}, std::vector<float>(a.values().begin(), a.values().end()));
    case LayerKind::Softmax: {
      Tensor out(a.shape());
      float m = -std::numeric_limits<float>::infinity();
      for (float v : a.values()) m = c.max(m, v);
      float s = 0.0f;
      for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = c.exp(c.sub(a[i], m));
        s = c.add(s, out[i]);
      }
      for (auto& v : out.values()) v = c.div(v, s);
      return out;
    }
  }
  return a;
}

struct Run {
  std::vector<Tensor> activations;
  std::vector<std::uint64_t> ops;  // per layer
};

inline Run execute(const splitwire::ModelGraph& model, const Tensor& input) {
  Run run;
  for (const auto& layer : model.layers()) {
    Counter c;
    const Tensor& a = layer.inputs[0] == splitwire::kModelInput ? input : run.activations[layer.inputs[0]];
    const Tensor* b = layer.inputs.size() > 1 ? &run.activations[layer.inputs[1]] : nullptr;
    run.activations.push_back(eval_layer(model, layer, a, b, c));
    run.ops.push_back(c.ops);
  }
  return run;
}

}  // namespace oracle
