#include "splitwire/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <semaphore>
#include <thread>

#include "splitwire/channel.hpp"
#include "splitwire/client.hpp"
#include "splitwire/codec.hpp"
#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/link.hpp"
#include "splitwire/server.hpp"

namespace splitwire {

std::string_view sweep_mode_name(SweepMode mode) {
  switch (mode) {
    case SweepMode::MobileOnly: return "mobile_only";
    case SweepMode::CloudOnly: return "cloud_only";
    case SweepMode::SharedF32: return "shared_f32";
    case SweepMode::SharedU8: return "shared_u8";
    case SweepMode::SharedU8H: return "shared_u8h";
  }
  return "?";
}

std::optional<SweepMode> parse_sweep_mode(std::string_view name) {
  for (auto m : {SweepMode::MobileOnly, SweepMode::CloudOnly, SweepMode::SharedF32, SweepMode::SharedU8,
                 SweepMode::SharedU8H})
    if (sweep_mode_name(m) == name) return m;
  return std::nullopt;
}

std::vector<SweepMode> parse_sweep_modes(std::string_view list) {
  if (list == "all")
    return {SweepMode::MobileOnly, SweepMode::CloudOnly, SweepMode::SharedF32, SweepMode::SharedU8,
            SweepMode::SharedU8H};
  std::vector<SweepMode> modes;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const auto comma = std::min(list.find(',', pos), list.size());
    const auto item = list.substr(pos, comma - pos);
    const auto mode = parse_sweep_mode(item);
    if (!mode)
      throw Error("unknown sweep mode '" + std::string(item) +
                  "'; valid modes: mobile_only, cloud_only, shared_f32, shared_u8, shared_u8h, all");
    modes.push_back(*mode);
    pos = comma + 1;
  }
  return modes;
}

std::vector<double> parse_rate_range(std::string_view text) {
  const auto dots = text.find("..");
  const auto colon = text.find(':');
  auto number = [&](std::string_view s) {
    std::string str(s);
    std::size_t used = 0;
    double v = std::numeric_limits<double>::quiet_NaN();
    try {
      v = std::stod(str, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (str.empty() || used != str.size() || !std::isfinite(v))
      throw Error("bad rate range '" + std::string(text) + "': expected LO..HI:STEP in KB/s");
    return v;
  };
  if (dots == std::string_view::npos || colon == std::string_view::npos || colon < dots)
    throw Error("bad rate range '" + std::string(text) + "': expected LO..HI:STEP in KB/s");
  const double lo = number(text.substr(0, dots));
  const double hi = number(text.substr(dots + 2, colon - dots - 2));
  const double step = number(text.substr(colon + 1));
  if (!(lo > 0.0) || !(hi >= lo) || !(step > 0.0))
    throw Error("bad rate range '" + std::string(text) + "': need 0 < LO <= HI and STEP > 0");
  std::vector<double> rates;
  // Index-based so the grid does not drift through repeated addition.
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step * (1 + 1e-12))) + 1;
  for (std::size_t i = 0; i < count; ++i) rates.push_back(lo + static_cast<double>(i) * step);
  return rates;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); }

struct ModePlan {
  SweepMode mode;
  std::optional<std::uint32_t> split;  // nullopt: raw input
  CodecId codec = CodecId::Float32Raw;
  std::vector<Bytes> messages;  // encoded frames with ids 1..n
  std::vector<Tensor> inputs;
  double t_client_s = 0.0;  // injected head (or full mobile) compute
  double t_server_s = 0.0;  // injected server compute
  StrategyPoint point;
};

// Drives n frames through a simulated link, one at a time. Returns per-frame
// (start, result arrival) pairs on the virtual clock.
std::vector<std::pair<double, double>> simulate_frames(const ModelGraph& model, const ModePlan& plan, double rate,
                                                       double rtt, bool pipelined, double head_stage_s) {
  const std::size_t n = plan.messages.size();
  std::vector<std::pair<double, double>> times(n);
  EventLoop loop;
  if (plan.mode == SweepMode::MobileOnly) {
    // No network: each frame is a local full pass.
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      times[i] = {t, t + plan.t_client_s};
      t += plan.t_client_s;
    }
    return times;
  }

  SimulatedLinkPair link(loop, LinkModel{rate, rtt / 2}, LinkModel{std::numeric_limits<double>::infinity(), rtt / 2});
  ServerSession session(model);
  const Bytes hello = encode_message(Hello{kProtocolVersion, model.hash()});
  session.feed(hello);
  if (!session.handshaken()) throw TransportError("simulated server rejected the handshake");

  double server_free = 0.0;
  link.server().on_receive([&](Bytes msg) {
    auto replies = session.feed(msg);
    const double start = std::max(loop.now(), server_free);
    server_free = start + plan.t_server_s;
    for (auto& r : replies)
      loop.schedule(server_free, [&link, r = std::move(r)]() mutable { link.server().send(std::move(r)); });
  });

  std::size_t next_to_start = 0;
  std::size_t results = 0;
  bool in_flight = false;
  std::optional<std::size_t> ready_to_send;
  std::function<void()> start_next;

  auto try_send = [&]() {
    if (!ready_to_send || in_flight) return;
    const auto i = *ready_to_send;
    ready_to_send.reset();
    in_flight = true;
    link.client().send(plan.messages[i]);
    if (pipelined) start_next();
  };
  start_next = [&]() {
    if (next_to_start >= n) return;
    const auto i = next_to_start++;
    times[i].first = loop.now();
    loop.schedule_after(head_stage_s, [&, i]() {
      ready_to_send = i;
      try_send();
    });
  };
  link.client().on_receive([&](Bytes msg) {
    const auto reply = decode_message(msg);
    const auto* result = std::get_if<ResultFrame>(&reply);
    if (!result) {
      const auto* err = std::get_if<ErrorMessage>(&reply);
      throw RemoteError(err ? err->code : 0, err ? err->message : "unexpected reply");
    }
    if (result->frame_id != results + 1) throw TransportError("simulated results arrived out of order");
    times[results++].second = loop.now();
    in_flight = false;
    if (pipelined) try_send();
    else start_next();
  });

  start_next();
  loop.run();
  if (results != n) throw TransportError("simulated run lost frames");
  return times;
}

ModePlan make_plan(const ModelGraph& model, const TimingModel& timing, SweepMode mode, std::uint32_t split,
                   const SyntheticSource& source, std::uint32_t frames) {
  ModePlan plan;
  plan.mode = mode;
  switch (mode) {
    case SweepMode::MobileOnly: break;
    case SweepMode::CloudOnly: plan.codec = CodecId::Float32Raw; break;
    case SweepMode::SharedF32: plan.split = split; plan.codec = CodecId::Float32Raw; break;
    case SweepMode::SharedU8: plan.split = split; plan.codec = CodecId::U8Quant; break;
    case SweepMode::SharedU8H: plan.split = split; plan.codec = CodecId::U8QuantHuffman; break;
  }
  double entropy_sum = 0.0;
  for (std::uint32_t i = 0; i < frames; ++i) {
    plan.inputs.push_back(generate_input(source, i % source.count).image);
    const auto& input = plan.inputs.back();
    if (mode == SweepMode::MobileOnly) {
      plan.messages.emplace_back();
      continue;
    }
    const Tensor feature = plan.split ? forward_range(model, input, 0, *plan.split) : input;
    auto frame = make_tensor_frame(i + 1, plan.split ? static_cast<std::uint16_t>(*plan.split) : kRawInputSplit,
                                   plan.codec, feature);
    if (plan.codec == CodecId::U8QuantHuffman)
      entropy_sum += order0_entropy(quantize(feature, frame.quant));
    plan.messages.push_back(encode_message(frame));
  }
  switch (mode) {
    case SweepMode::MobileOnly:
      plan.point = {Strategy::MobileOnly};
      plan.t_client_s = timing.t_mobile_full_s;
      break;
    case SweepMode::CloudOnly:
      plan.point = {Strategy::CloudOnly};
      plan.t_server_s = timing.t_server_full_s;
      break;
    default: {
      const double h = entropy_sum / frames;
      plan.point = shared_point(timing, split, predicted_upload_bytes(model, split, plan.codec, h));
      plan.t_client_s = timing.t_head(split);
      plan.t_server_s = timing.t_tail(split);
    }
  }
  return plan;
}

double mean_upload(const ModePlan& plan) {
  if (plan.mode == SweepMode::MobileOnly) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 1; i < plan.messages.size(); ++i) sum += static_cast<double>(plan.messages[i].size());
  return sum / static_cast<double>(plan.messages.size() - 1);
}

// Real-time run of n frames through an in-process TCP server behind a throttled
// uplink that carries the whole rtt. Returns per-frame (start, result) seconds.
std::vector<std::pair<double, double>> real_frames(const ModelGraph& model, const ModePlan& plan, double rate,
                                                   double rtt, bool pipelined) {
  const std::size_t n = plan.inputs.size();
  std::vector<std::pair<double, double>> times(n);
  const auto origin = Clock::now();
  if (plan.mode == SweepMode::MobileOnly) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto t0 = Clock::now();
      (void)forward(model, plan.inputs[i]);
      times[i] = {seconds_between(origin, t0), seconds_between(origin, Clock::now())};
    }
    return times;
  }

  TcpServer server(model, net::parse_address("127.0.0.1:0"));
  server.start();
  auto inner = SocketChannel::connect(net::parse_address("127.0.0.1:" + std::to_string(server.port())));
  Client client(model, std::make_unique<ThrottledChannel>(std::move(inner), LinkModel{rate, rtt}));
  client.handshake();

  if (!pipelined) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto t0 = Clock::now();
      (void)client.infer(plan.inputs[i], plan.split, plan.codec);
      times[i] = {seconds_between(origin, t0), seconds_between(origin, Clock::now())};
    }
  } else {
    std::binary_semaphore slot(1);
    std::exception_ptr receive_error;
    std::thread receiver([&] {
      try {
        for (std::size_t i = 0; i < n; ++i) {
          (void)client.receive_result(static_cast<std::uint32_t>(i + 1));
          times[i].second = seconds_between(origin, Clock::now());
          slot.release();
        }
      } catch (...) {
        receive_error = std::current_exception();
        slot.release();
      }
    });
    for (std::size_t i = 0; i < n && !receive_error; ++i) {
      times[i].first = seconds_between(origin, Clock::now());
      Bytes msg = client.prepare(plan.inputs[i], plan.split, plan.codec);
      slot.acquire();
      if (receive_error) break;
      client.send(msg);
    }
    receiver.join();
    if (receive_error) std::rethrow_exception(receive_error);
  }
  client.channel().close();
  server.stop();
  return times;
}

double mean_latency_ms(const std::vector<std::pair<double, double>>& times) {
  double sum = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) sum += times[i].second - times[i].first;
  return 1000.0 * sum / static_cast<double>(times.size() - 1);
}

double throughput(const std::vector<std::pair<double, double>>& times) {
  const double span = times.back().second - times.front().second;
  return span > 0.0 ? static_cast<double>(times.size() - 1) / span : std::numeric_limits<double>::infinity();
}

}  // namespace

SweepResult run_sweep(const ModelGraph& model, const TimingModel& timing, const SweepOptions& options) {
  if (options.frames < 3) throw Error("sweep needs at least 3 frames per row");
  if (options.rates_kbps.empty()) throw Error("sweep needs at least one rate");
  if (options.modes.empty()) throw Error("sweep needs at least one mode");
  timing.validate();
  const std::uint32_t split = model.split_by_name(options.split);

  std::vector<ModePlan> plans;
  for (auto mode : options.modes) plans.push_back(make_plan(model, timing, mode, split, options.source, options.frames));

  SweepResult result;
  for (double kbps : options.rates_kbps) {
    if (!(kbps > 0.0)) throw Error("sweep rates must be > 0");
    const double rate = kbps * kBytesPerKB;
    for (const auto& plan : plans) {
      SweepRow row;
      row.rate_kbps = kbps;
      row.mode = plan.mode;
      row.split_layer = plan.mode == SweepMode::MobileOnly ? "none"
                        : plan.split                        ? model.layer(*plan.split).name
                                                            : "input";
      row.codec = plan.mode == SweepMode::MobileOnly ? "none" : std::string(codec_name(plan.codec));
      row.predicted_ms = 1000.0 * predict_total(plan.point, timing, rate);
      row.upload_bytes = mean_upload(plan);
      if (options.measure) {
        const auto times = options.link == LinkMode::Simulated
                               ? simulate_frames(model, plan, rate, timing.rtt_s, false, plan.t_client_s)
                               : real_frames(model, plan, rate, timing.rtt_s, false);
        row.measured_ms = mean_latency_ms(times);
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out = "rate_kbps,mode,split_layer,codec,predicted_ms,measured_ms,upload_bytes\n";
  char buf[512];
  for (const auto& r : result.rows) {
    char measured[64] = "";
    if (r.measured_ms) std::snprintf(measured, sizeof measured, "%.6f", *r.measured_ms);
    std::snprintf(buf, sizeof buf, "%g,%s,%s,%s,%.6f,%s,%.1f\n", r.rate_kbps, std::string(sweep_mode_name(r.mode)).c_str(),
                  r.split_layer.c_str(), r.codec.c_str(), r.predicted_ms, measured, r.upload_bytes);
    out += buf;
  }
  return out;
}

PipelineResult run_pipelined(const ModelGraph& model, const TimingModel& timing, const PipelineOptions& options) {
  if (options.frames < 10) throw Error("pipelined run needs at least 10 frames");
  if (!model.is_valid_split(options.split))
    throw InvalidSplitError("invalid split point " + std::to_string(options.split));
  timing.validate();
  const SweepMode mode = options.codec == CodecId::Float32Raw ? SweepMode::SharedF32
                         : options.codec == CodecId::U8Quant  ? SweepMode::SharedU8
                                                              : SweepMode::SharedU8H;
  const ModePlan plan = make_plan(model, timing, mode, options.split, options.source, options.frames);

  PipelineResult out;
  out.head_stage_s = plan.t_client_s + options.t_encode_s;
  out.network_stage_s = mean_upload(plan) / options.rate_bytes_per_s + timing.rtt_s + plan.t_server_s;
  if (options.link == LinkMode::Simulated) {
    out.fps_sequential =
        throughput(simulate_frames(model, plan, options.rate_bytes_per_s, timing.rtt_s, false, out.head_stage_s));
    out.fps_pipelined =
        throughput(simulate_frames(model, plan, options.rate_bytes_per_s, timing.rtt_s, true, out.head_stage_s));
  } else {
    out.fps_sequential = throughput(real_frames(model, plan, options.rate_bytes_per_s, timing.rtt_s, false));
    out.fps_pipelined = throughput(real_frames(model, plan, options.rate_bytes_per_s, timing.rtt_s, true));
  }
  return out;
}

}  // namespace splitwire
