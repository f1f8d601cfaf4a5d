#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "splitwire/analyzer.hpp"
#include "splitwire/client.hpp"
#include "splitwire/codec.hpp"
#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/experiments.hpp"
#include "splitwire/huffman.hpp"
#include "splitwire/latency.hpp"
#include "splitwire/model_file.hpp"
#include "splitwire/quant.hpp"
#include "splitwire/server.hpp"
#include "splitwire/wire.hpp"
#include "splitwire/zoo.hpp"

namespace py = pybind11;
using namespace splitwire;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<std::uint32_t>(a.shape(i)));
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

ByteView view(const py::bytes& b) {
  const std::string_view s = b;
  return ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

py::bytes to_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

CodecId codec_arg(const std::string& name) {
  const auto c = parse_codec(name);
  if (!c) throw py::value_error("unknown codec '" + name + "' (expected f32, u8 or u8h)");
  return *c;
}

std::optional<std::uint32_t> split_arg(const ModelGraph& model, const py::object& split) {
  if (split.is_none()) return std::nullopt;
  if (py::isinstance<py::str>(split)) return model.split_by_name(split.cast<std::string>());
  return split.cast<std::uint32_t>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Split neural network inference: engine, feature codec, transport and latency model";

  auto base = py::register_exception<Error>(m, "SplitwireError");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<InvalidSplitError>(m, "InvalidSplitError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  auto transport = py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<RemoteError>(m, "RemoteError", transport.ptr());

  py::class_<ModelGraph>(m, "Model")
      .def_property_readonly("hash", &ModelGraph::hash)
      .def_property_readonly("input_shape", &ModelGraph::input_shape)
      .def_property_readonly("valid_splits", &ModelGraph::valid_splits)
      .def_property_readonly("valid_split_names", &ModelGraph::valid_split_names)
      .def_property_readonly("layer_names",
                             [](const ModelGraph& g) {
                               std::vector<std::string> names;
                               for (const auto& l : g.layers()) names.push_back(l.name);
                               return names;
                             })
      .def("__len__", &ModelGraph::size)
      .def("split_by_name", &ModelGraph::split_by_name)
      .def("output_shape", py::overload_cast<std::uint32_t>(&ModelGraph::output_shape, py::const_))
      .def("forward",
           [](const ModelGraph& g, const FloatArray& input) {
             py::list out;
             for (const auto& t : forward(g, to_tensor(input))) out.append(to_array(t));
             return out;
           })
      .def("forward_range",
           [](const ModelGraph& g, const FloatArray& boundary, std::uint32_t from, std::uint32_t to) {
             return to_array(forward_range(g, to_tensor(boundary), from, to));
           })
      .def("count_flops",
           [](const ModelGraph& g) {
             std::vector<std::tuple<std::uint32_t, std::uint64_t, std::uint64_t>> out;
             for (const auto& f : count_flops(g)) out.emplace_back(f.id, f.flops, f.cumulative);
             return out;
           })
      .def("save", [](const ModelGraph& g) { return to_bytes(save_model(g)); })
      .def("__eq__", [](const ModelGraph& a, const ModelGraph& b) { return a == b; });

  m.def("build_microresnet", &build_microresnet, py::arg("seed"));
  m.def(
      "calibrate_batchnorm",
      [](const ModelGraph& g, std::uint64_t seed, std::uint32_t count) {
        return calibrate_batchnorm(g, SyntheticSource{seed, count, g.input_shape()});
      },
      py::arg("model"), py::arg("seed") = 1, py::arg("count") = 64);
  m.def("load_model", [](const py::bytes& b) { return load_model(view(b)); });
  m.def("load_model_file", [](const std::string& path) { return load_model_file(path); });
  m.def("save_model_file", [](const ModelGraph& g, const std::string& path) { save_model_file(g, path); });
  m.def(
      "generate_input",
      [](std::uint64_t seed, std::uint32_t index, std::uint32_t count) {
        const auto in = generate_input(SyntheticSource{seed, count, {3, 32, 32}}, index);
        return py::make_tuple(to_array(in.image), in.label);
      },
      py::arg("seed"), py::arg("index"), py::arg("count") = 64);

  m.def(
      "estimate_quant_params",
      [](const FloatArray& values) {
        const auto q = estimate_quant_params(std::span<const float>(values.data(), values.size()));
        return py::dict(py::arg("mu") = q.mu, py::arg("sigma") = q.sigma, py::arg("lo") = q.lo, py::arg("hi") = q.hi);
      },
      "Population mean/std and the [mu - 3 sigma, mu + 3 sigma] interval");
  m.def("quantize", [](const FloatArray& values, float lo, float hi) {
    return to_bytes(quantize(to_tensor(values), QuantParams::from_interval(lo, hi)));
  });
  m.def("dequantize", [](const py::bytes& codes, const Shape& shape, float lo, float hi) {
    return to_array(dequantize(view(codes), shape, QuantParams::from_interval(lo, hi)));
  });
  m.def("entropy_encode", [](const py::bytes& data) { return to_bytes(entropy_encode(view(data))); });
  m.def("entropy_decode", [](const py::bytes& data) { return to_bytes(entropy_decode(view(data))); });
  m.def("order0_entropy", [](const py::bytes& data) { return order0_entropy(view(data)); });

  m.def(
      "encode_tensor_frame",
      [](const FloatArray& tensor, const std::string& codec, std::uint32_t frame_id, std::uint16_t split_layer) {
        return to_bytes(encode_frame(make_tensor_frame(frame_id, split_layer, codec_arg(codec), to_tensor(tensor))));
      },
      py::arg("tensor"), py::arg("codec"), py::arg("frame_id") = 1, py::arg("split_layer") = 0);
  m.def("decode_tensor_frame", [](const py::bytes& message) {
    const auto f = decode_frame(view(message));
    return py::dict(py::arg("frame_id") = f.frame_id, py::arg("split_layer") = f.split_layer,
                    py::arg("codec") = std::string(codec_name(f.codec)), py::arg("shape") = f.shape,
                    py::arg("payload_bytes") = f.payload.size(), py::arg("tensor") = to_array(frame_tensor(f)));
  });

  m.def(
      "profile_splits",
      [](const ModelGraph& g, std::uint64_t seed, std::uint32_t count) {
        const auto report = profile_splits(g, SyntheticSource{seed, count, g.input_shape()});
        py::list rows;
        for (const auto& p : report.profiles)
          rows.append(py::dict(py::arg("layer_id") = p.layer_id, py::arg("layer_name") = p.layer_name,
                               py::arg("cum_flops") = p.cumulative_flops, py::arg("bytes_f32") = p.bytes_f32,
                               py::arg("bytes_u8") = p.bytes_u8, py::arg("entropy_bits") = p.entropy_bits,
                               py::arg("est_bytes") = p.est_compressed_bytes, py::arg("stability") = p.stability));
        return py::make_tuple(rows, profiles_csv(report.profiles), report.uncalibrated);
      },
      py::arg("model"), py::arg("seed") = 1, py::arg("count") = 64,
      "Returns (profiles, csv_text, uncalibrated)");

  py::class_<TimingModel>(m, "TimingModel")
      .def_readwrite("t_mobile_full_s", &TimingModel::t_mobile_full_s)
      .def_readwrite("t_server_full_s", &TimingModel::t_server_full_s)
      .def_readwrite("rtt_s", &TimingModel::rtt_s)
      .def_readwrite("input_bytes", &TimingModel::input_bytes)
      .def("t_head", &TimingModel::t_head)
      .def("t_tail", &TimingModel::t_tail);
  m.def(
      "calibrate_timing",
      [](const ModelGraph& g, const std::string& config_text) { return calibrate_timing(g, parse_timing_config(config_text)); },
      py::arg("model"), py::arg("config") = "", "Timing model from a key = value config (defaults: flops calibration)");
  m.def(
      "predict_total",
      [](const TimingModel& tm, const std::string& mode, double rate, double t_head, double t_tail, double upload) {
        const auto s = parse_strategy(mode);
        if (!s) throw py::value_error("unknown mode '" + mode + "'");
        return predict_total({*s, t_head, t_tail, upload}, tm, rate);
      },
      py::arg("timing"), py::arg("mode"), py::arg("rate_bytes_per_s"), py::arg("t_head_s") = 0.0,
      py::arg("t_tail_s") = 0.0, py::arg("upload_bytes") = 0.0);
  m.def(
      "find_shared_crossover",
      [](const ModelGraph& g, const TimingModel& tm, const std::string& split, const std::string& codec, double lo,
         double hi) {
        const auto k = g.split_by_name(split);
        const auto point = shared_point(tm, k, predicted_upload_bytes(g, k, codec_arg(codec)));
        return find_crossover(point, StrategyPoint{Strategy::MobileOnly}, tm, lo, hi);
      },
      "Lowest rate (bytes/s) where shared inference beats mobile_only, or None");
  m.def(
      "run_sweep",
      [](const ModelGraph& g, const TimingModel& tm, const std::string& rates, const std::string& modes,
         std::uint32_t frames, const std::string& split) {
        SweepOptions o;
        o.rates_kbps = parse_rate_range(rates);
        o.modes = parse_sweep_modes(modes);
        o.frames = frames;
        o.split = split;
        return sweep_csv(run_sweep(g, tm, o));
      },
      py::arg("model"), py::arg("timing"), py::arg("rates") = "50..3000:50",
      py::arg("modes") = "mobile_only,cloud_only,shared_f32,shared_u8", py::arg("frames") = 3,
      py::arg("split") = "block1_relu", "Simulated sweep; returns the CSV text");
  m.def(
      "run_pipelined",
      [](const ModelGraph& g, const TimingModel& tm, double rate, const std::string& split, const std::string& codec,
         std::uint32_t frames) {
        PipelineOptions o;
        o.rate_bytes_per_s = rate;
        o.split = g.split_by_name(split);
        o.codec = codec_arg(codec);
        o.frames = frames;
        const auto r = run_pipelined(g, tm, o);
        return py::dict(py::arg("fps_sequential") = r.fps_sequential, py::arg("fps_pipelined") = r.fps_pipelined,
                        py::arg("head_stage_s") = r.head_stage_s, py::arg("network_stage_s") = r.network_stage_s);
      },
      py::arg("model"), py::arg("timing"), py::arg("rate_bytes_per_s"), py::arg("split") = "block1_relu",
      py::arg("codec") = "u8", py::arg("frames") = 20);

  py::class_<TcpServer>(m, "Server")
      .def(py::init([](const ModelGraph& g, const std::string& listen) {
             return std::make_unique<TcpServer>(g, net::parse_address(listen));
           }),
           py::arg("model"), py::arg("listen") = "127.0.0.1:0", py::keep_alive<1, 2>())
      .def_property_readonly("port", &TcpServer::port)
      .def("start", &TcpServer::start)
      .def("stop", &TcpServer::stop, py::call_guard<py::gil_scoped_release>());
  m.def(
      "client_infer",
      [](const ModelGraph& g, const std::string& address, const FloatArray& input, const py::object& split,
         const std::string& codec) {
        const auto sp = split_arg(g, split);
        const auto tensor = to_tensor(input);
        InferResult r;
        {
          py::gil_scoped_release release;
          r = client_infer(g, address, tensor, sp, codec_arg(codec));
        }
        py::list top;
        for (const auto& c : r.result.top_k) top.append(py::make_tuple(c.class_id, c.score));
        return py::dict(py::arg("frame_id") = r.result.frame_id, py::arg("top_k") = top,
                        py::arg("upload_bytes") = r.timing.upload_bytes, py::arg("payload_bytes") = r.timing.payload_bytes,
                        py::arg("t_total_s") = r.timing.total_s);
      },
      py::arg("model"), py::arg("address"), py::arg("input"), py::arg("split") = py::none(), py::arg("codec") = "f32");
}
