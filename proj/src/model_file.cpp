#include "splitwire/model_file.hpp"

#include <fstream>
#include <iterator>

namespace splitwire {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'M', 'F'};

std::size_t weight_floats(const Layer& layer) {
  return std::visit(
      [](const auto& p) -> std::size_t {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Conv2DParams> || std::is_same_v<P, DenseParams>)
          return p.weights.size() + p.bias.size();
        else if constexpr (std::is_same_v<P, BatchNormParams>)
          return 4 * static_cast<std::size_t>(p.channels);
        else
          return 0;
      },
      layer.params);
}

void write_metadata(ByteWriter& w, const Layer& layer) {
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Conv2DParams>) {
          w.u32(p.in_channels);
          w.u32(p.out_channels);
          w.u32(p.kernel_h);
          w.u32(p.kernel_w);
          w.u32(p.stride);
          w.u32(p.padding);
        } else if constexpr (std::is_same_v<P, BatchNormParams>) {
          w.u32(p.channels);
          w.f32(p.epsilon);
        } else if constexpr (std::is_same_v<P, PoolParams>) {
          w.u32(p.kernel_h);
          w.u32(p.kernel_w);
          w.u32(p.stride);
          w.u32(p.padding);
        } else if constexpr (std::is_same_v<P, DenseParams>) {
          w.u32(p.in_features);
          w.u32(p.out_features);
        }
      },
      layer.params);
}

void write_weights(ByteWriter& w, const Layer& layer) {
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Conv2DParams> || std::is_same_v<P, DenseParams>) {
          w.floats(p.weights);
          w.floats(p.bias);
        } else if constexpr (std::is_same_v<P, BatchNormParams>) {
          w.floats(p.gamma);
          w.floats(p.beta);
          w.floats(p.mean);
          w.floats(p.variance);
        }
      },
      layer.params);
}

[[noreturn]] void malformed(const std::string& what) {
  throw FormatError(FormatError::Kind::Malformed, "model file: " + what);
}

LayerParams read_metadata(ByteReader& r, LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: {
      Conv2DParams p;
      p.in_channels = r.u32();
      p.out_channels = r.u32();
      p.kernel_h = r.u32();
      p.kernel_w = r.u32();
      p.stride = r.u32();
      p.padding = r.u32();
      return p;
    }
    case LayerKind::BatchNorm: {
      BatchNormParams p;
      p.channels = r.u32();
      p.epsilon = r.f32();
      return p;
    }
    case LayerKind::MaxPool: {
      PoolParams p;
      p.kernel_h = r.u32();
      p.kernel_w = r.u32();
      p.stride = r.u32();
      p.padding = r.u32();
      return p;
    }
    case LayerKind::Dense: {
      DenseParams p;
      p.in_features = r.u32();
      p.out_features = r.u32();
      return p;
    }
    case LayerKind::ReLU:
    case LayerKind::Add:
    case LayerKind::GlobalAvgPool:
    case LayerKind::Flatten:
    case LayerKind::Softmax:
      return std::monostate{};
  }
  malformed("unknown layer kind " + std::to_string(static_cast<int>(kind)));
}

// Expected float count from metadata alone, so a hostile header cannot request
// an allocation larger than the file.
std::uint64_t expected_floats(const LayerParams& params) {
  return std::visit(
      [](const auto& p) -> std::uint64_t {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Conv2DParams>)
          return std::uint64_t{p.out_channels} * p.in_channels * p.kernel_h * p.kernel_w + p.out_channels;
        else if constexpr (std::is_same_v<P, DenseParams>)
          return std::uint64_t{p.out_features} * p.in_features + p.out_features;
        else if constexpr (std::is_same_v<P, BatchNormParams>)
          return 4ull * p.channels;
        else
          return 0;
      },
      params);
}

void read_weights(ByteReader& r, LayerParams& params) {
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Conv2DParams>) {
          p.weights = r.floats(std::size_t{p.out_channels} * p.in_channels * p.kernel_h * p.kernel_w);
          p.bias = r.floats(p.out_channels);
        } else if constexpr (std::is_same_v<P, DenseParams>) {
          p.weights = r.floats(std::size_t{p.out_features} * p.in_features);
          p.bias = r.floats(p.out_features);
        } else if constexpr (std::is_same_v<P, BatchNormParams>) {
          p.gamma = r.floats(p.channels);
          p.beta = r.floats(p.channels);
          p.mean = r.floats(p.channels);
          p.variance = r.floats(p.channels);
        }
      },
      params);
}

}  // namespace

namespace detail {

Bytes serialize_body(const Shape& input_shape, const std::vector<Layer>& layers) {
  Bytes out;
  ByteWriter w(out);
  w.bytes(ByteView(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u8(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(input_shape.size()));
  for (auto d : input_shape) w.u32(d);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  std::size_t total = 0;
  for (const auto& layer : layers) {
    w.u8(static_cast<std::uint8_t>(layer.kind));
    w.u16(static_cast<std::uint16_t>(layer.name.size()));
    w.str(layer.name);
    w.u8(static_cast<std::uint8_t>(layer.inputs.size()));
    for (auto in : layer.inputs) w.u32(in);
    write_metadata(w, layer);
    total += weight_floats(layer);
  }
  w.u32(static_cast<std::uint32_t>(total));
  for (const auto& layer : layers) write_weights(w, layer);
  return out;
}

}  // namespace detail

Bytes save_model(const ModelGraph& model) {
  Bytes out = detail::serialize_body(model.input_shape(), model.layers());
  ByteWriter(out).u64(fnv1a64(out));
  return out;
}

ModelGraph load_model(ByteView bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, "model file: bad magic (expected CIMF)");
  auto version = r.u8();
  if (version != kModelFormatVersion)
    throw FormatError(FormatError::Kind::VersionMismatch,
                      "model file: unsupported version " + std::to_string(version));

  Shape input_shape(r.u8());
  for (auto& d : input_shape) d = r.u32();

  auto layer_count = r.u32();
  // Each layer record is at least 4 bytes.
  if (layer_count > r.remaining() / 4) throw FormatError(FormatError::Kind::Truncated, "model file: truncated layer table");

  std::vector<Layer> layers;
  layers.reserve(layer_count);
  std::uint64_t expected_total = 0;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    Layer layer;
    layer.id = i;
    auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::Softmax)) malformed("unknown layer kind " + std::to_string(kind));
    layer.kind = static_cast<LayerKind>(kind);
    layer.name = r.str(r.u16());
    layer.inputs.resize(r.u8());
    for (auto& in : layer.inputs) in = r.u32();
    layer.params = read_metadata(r, layer.kind);
    expected_total += expected_floats(layer.params);
    layers.push_back(std::move(layer));
  }

  auto weight_count = r.u32();
  if (weight_count != expected_total)
    malformed("weight count " + std::to_string(weight_count) + " does not match layer metadata (" +
              std::to_string(expected_total) + ")");
  if (std::uint64_t{weight_count} * 4 > r.remaining())
    throw FormatError(FormatError::Kind::Truncated, "model file: truncated weight blob");
  for (auto& layer : layers) read_weights(r, layer.params);

  auto body_size = r.position();
  auto stored_hash = r.u64();
  if (!r.done()) malformed("trailing bytes after model hash");
  if (fnv1a64(bytes.first(body_size)) != stored_hash)
    throw FormatError(FormatError::Kind::HashMismatch, "model file: hash mismatch (file corrupted)");

  try {
    return ModelGraph(std::move(input_shape), std::move(layers));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    malformed(e.what());
  }
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, ByteView bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void save_model_file(const ModelGraph& model, const std::filesystem::path& path) {
  write_file(path, save_model(model));
}

ModelGraph load_model_file(const std::filesystem::path& path) { return load_model(read_file(path)); }

}  // namespace splitwire
