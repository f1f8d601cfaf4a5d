#include "splitwire/latency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/huffman.hpp"
#include "splitwire/model_file.hpp"

namespace splitwire {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::MobileOnly: return "mobile_only";
    case Strategy::CloudOnly: return "cloud_only";
    case Strategy::Shared: return "shared";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  std::string n(name);
  std::replace(n.begin(), n.end(), '-', '_');
  if (n == "mobile_only") return Strategy::MobileOnly;
  if (n == "cloud_only") return Strategy::CloudOnly;
  if (n == "shared") return Strategy::Shared;
  return std::nullopt;
}

double TimingModel::t_head(std::uint32_t k) const {
  if (k >= client_layer_s.size()) throw InvalidSplitError("invalid split point " + std::to_string(k));
  return std::accumulate(client_layer_s.begin(), client_layer_s.begin() + k + 1, 0.0);
}

double TimingModel::t_tail(std::uint32_t k) const {
  if (k >= server_layer_s.size()) throw InvalidSplitError("invalid split point " + std::to_string(k));
  return std::accumulate(server_layer_s.begin() + k + 1, server_layer_s.end(), 0.0);
}

void TimingModel::validate() const {
  auto bad = [](double v) { return !(v >= 0.0) || !std::isfinite(v); };
  if (bad(t_mobile_full_s) || bad(t_server_full_s) || bad(rtt_s) || bad(input_bytes))
    throw Error("timing model values must be finite and >= 0");
  for (double v : client_layer_s)
    if (bad(v)) throw Error("timing model layer times must be finite and >= 0");
  for (double v : server_layer_s)
    if (bad(v)) throw Error("timing model layer times must be finite and >= 0");
}

StrategyPoint shared_point(const TimingModel& model, std::uint32_t split, double upload_bytes) {
  return {Strategy::Shared, model.t_head(split), model.t_tail(split), upload_bytes};
}

double predict_total(const StrategyPoint& point, const TimingModel& model, double rate) {
  if (!(rate > 0.0)) throw Error("upload rate must be > 0");
  switch (point.strategy) {
    case Strategy::MobileOnly: return model.t_mobile_full_s;
    case Strategy::CloudOnly: return model.rtt_s + model.input_bytes / rate + model.t_server_full_s;
    case Strategy::Shared: return point.t_head_s + model.rtt_s + point.upload_bytes / rate + point.t_tail_s;
  }
  throw Error("unknown strategy");
}

std::optional<double> find_crossover(const StrategyPoint& a, const StrategyPoint& b, const TimingModel& model,
                                     double lo, double hi) {
  if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) throw Error("crossover needs a non-empty positive rate range");
  auto wins = [&](double r) { return predict_total(a, model, r) <= predict_total(b, model, r); };
  if (wins(lo)) return lo;
  if (!wins(hi)) return std::nullopt;
  // Invariant: a loses at lo, wins at hi.
  while (hi - lo > 1e-6 * hi) {
    const double mid = lo + (hi - lo) / 2;
    (wins(mid) ? hi : lo) = mid;
  }
  return hi;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_nonnegative(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || !std::isfinite(v) || v < 0.0)
    throw Error("timing config: " + key + " must be a non-negative number, got '" + value + "'");
  return v;
}

}  // namespace

TimingConfig parse_timing_config(std::string_view text) {
  TimingConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("timing config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "t_mobile_full_ms") {
      cfg.t_mobile_full_s = parse_nonnegative(key, value) / 1000.0;
    } else if (key == "t_server_full_ms") {
      cfg.t_server_full_s = parse_nonnegative(key, value) / 1000.0;
    } else if (key == "rtt_ms") {
      cfg.rtt_s = parse_nonnegative(key, value) / 1000.0;
    } else if (key == "calibration") {
      if (value == "flops") cfg.calibration = Calibration::Flops;
      else if (value == "measured") cfg.calibration = Calibration::Measured;
      else throw Error("timing config: calibration must be flops or measured, got '" + value + "'");
    } else if (key == "full_pass") {
      if (value == "reference") cfg.full_pass = FullPass::Reference;
      else if (value == "calibrated") cfg.full_pass = FullPass::Calibrated;
      else throw Error("timing config: full_pass must be reference or calibrated, got '" + value + "'");
    } else if (key == "client_gflops") {
      cfg.client_flops_per_s = parse_nonnegative(key, value) * 1e9;
    } else if (key == "server_gflops") {
      cfg.server_flops_per_s = parse_nonnegative(key, value) * 1e9;
    } else if (key == "measure_repeats") {
      const double v = parse_nonnegative(key, value);
      if (v < 1 || v != std::floor(v)) throw Error("timing config: measure_repeats must be a positive integer");
      cfg.measure_repeats = static_cast<std::uint32_t>(v);
    } else {
      throw Error("timing config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (cfg.t_mobile_full_s <= 0.0 || cfg.t_server_full_s <= 0.0)
    throw Error("timing config: full-pass times must be > 0");
  if (cfg.client_flops_per_s <= 0.0 || cfg.server_flops_per_s <= 0.0)
    throw Error("timing config: FLOP rates must be > 0");
  return cfg;
}

TimingConfig load_timing_config(const std::string& path) {
  const Bytes raw = read_file(path);
  return parse_timing_config(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()));
}

std::vector<double> measure_layer_seconds(const ModelGraph& model, const Tensor& input, std::uint32_t repeats) {
  using Clock = std::chrono::steady_clock;
  repeats = std::max<std::uint32_t>(repeats, 1);
  std::vector<std::vector<double>> samples(model.size());
  for (std::uint32_t r = 0; r < repeats; ++r) {
    std::vector<Tensor> acts;
    acts.reserve(model.size());
    for (const auto& layer : model.layers()) {
      const Tensor& a = layer.inputs[0] == kModelInput ? input : acts[layer.inputs[0]];
      const Tensor* b = layer.inputs.size() > 1 ? &acts[layer.inputs[1]] : nullptr;
      const auto t0 = Clock::now();
      acts.push_back(detail::apply_layer(model, layer, a, b));
      samples[layer.id].push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
  }
  std::vector<double> out;
  out.reserve(samples.size());
  for (auto& s : samples) {
    std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
    out.push_back(s[s.size() / 2]);
  }
  return out;
}

TimingModel calibrate_timing(const ModelGraph& model, const TimingConfig& config, const SyntheticSource& source) {
  TimingModel tm;
  tm.rtt_s = config.rtt_s;
  tm.input_bytes = predicted_upload_bytes(model, std::nullopt, CodecId::Float32Raw);
  if (config.calibration == Calibration::Flops) {
    if (!(config.client_flops_per_s > 0.0) || !(config.server_flops_per_s > 0.0))
      throw Error("FLOP rates must be > 0");
    for (const auto& f : count_flops(model)) {
      tm.client_layer_s.push_back(static_cast<double>(f.flops) / config.client_flops_per_s);
      tm.server_layer_s.push_back(static_cast<double>(f.flops) / config.server_flops_per_s);
    }
  } else {
    if (!(config.t_mobile_full_s > 0.0)) throw Error("t_mobile_full must be > 0");
    const double speedup = config.t_mobile_full_s / config.t_server_full_s;
    tm.client_layer_s = measure_layer_seconds(model, generate_input(source, 0).image, config.measure_repeats);
    for (double t : tm.client_layer_s) tm.server_layer_s.push_back(t / speedup);
  }
  if (config.full_pass == FullPass::Reference) {
    tm.t_mobile_full_s = config.t_mobile_full_s;
    tm.t_server_full_s = config.t_server_full_s;
  } else {
    tm.t_mobile_full_s = std::accumulate(tm.client_layer_s.begin(), tm.client_layer_s.end(), 0.0);
    tm.t_server_full_s = std::accumulate(tm.server_layer_s.begin(), tm.server_layer_s.end(), 0.0);
  }
  tm.validate();
  return tm;
}

double predicted_upload_bytes(const ModelGraph& model, std::optional<std::uint32_t> split, CodecId codec,
                              double entropy_bits) {
  const Shape& shape = split ? model.output_shape(*split) : model.input_shape();
  const double n = static_cast<double>(element_count(shape));
  const double overhead = static_cast<double>(tensor_frame_overhead(shape.size(), codec));
  switch (codec) {
    case CodecId::Float32Raw: return overhead + 4.0 * n;
    case CodecId::U8Quant: return overhead + n;
    case CodecId::U8QuantHuffman:
      return overhead + static_cast<double>(kHuffmanHeaderBytes) + std::ceil(n * entropy_bits / 8.0);
  }
  throw Error("unknown codec");
}

}  // namespace splitwire
