#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "splitwire/analyzer.hpp"
#include "splitwire/channel.hpp"
#include "splitwire/client.hpp"
#include "splitwire/control_api.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/experiments.hpp"
#include "splitwire/image_io.hpp"
#include "splitwire/latency.hpp"
#include "splitwire/log.hpp"
#include "splitwire/model_file.hpp"
#include "splitwire/server.hpp"
#include "splitwire/session.hpp"
#include "splitwire/zoo.hpp"

using namespace splitwire;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Bad flag values discovered after parsing (exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("failed writing " + path);
}

// "input" (or "none") means cloud-only; anything else must be a valid split name.
std::optional<std::uint32_t> resolve_split(const ModelGraph& model, const std::string& name) {
  if (name == "input") return std::nullopt;
  try {
    return model.split_by_name(name);
  } catch (const InvalidSplitError& e) {
    throw UsageError(e.what());
  }
}

std::uint32_t resolve_shared_split(const ModelGraph& model, const std::string& name) {
  try {
    return model.split_by_name(name);
  } catch (const InvalidSplitError& e) {
    throw UsageError(e.what());
  }
}

Tensor load_input(const ModelGraph& model, const std::string& spec, std::uint64_t synth_seed) {
  if (spec.rfind("synth:", 0) == 0) {
    const std::string idx = spec.substr(6);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(idx, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (idx.empty() || used != idx.size() || v > 0xFFFFFFFEul)
      throw UsageError("bad --input '" + spec + "': expected synth:INDEX");
    const SyntheticSource source{synth_seed, static_cast<std::uint32_t>(v) + 1, model.input_shape()};
    return generate_input(source, static_cast<std::uint32_t>(v)).image;
  }
  return fit_to_input(read_pnm(spec), model.input_shape());
}

TimingConfig timing_config(const std::string& path, bool simulate) {
  TimingConfig cfg = path.empty() ? TimingConfig{} : load_timing_config(path);
  // Real runs calibrate on this machine unless the file says otherwise.
  if (path.empty() && !simulate) cfg.calibration = Calibration::Measured;
  return cfg;
}

const std::vector<std::string> kCodecNames{"f32", "u8", "u8h"};

}  // namespace

int main(int argc, char** argv) {
  init_logging();

  CLI::App app{"splitwire: split neural network inference between a client and a server"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "splitwire 0.1.0");
  app.set_config("--config", "", "TOML/INI file of flag defaults, one [subcommand] section each");

  // gen-model
  auto* gen = app.add_subcommand("gen-model", "Build a seeded MicroResNet, calibrate BatchNorm, write a CIMF file");
  std::uint64_t gen_seed = 42;
  std::uint32_t gen_calib = 64;
  std::uint64_t gen_calib_seed = 1;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "Weight seed")->capture_default_str();
  gen->add_option("--calib", gen_calib, "Calibration images for BatchNorm statistics (0 = leave uncalibrated, else >= 16)")
      ->capture_default_str();
  gen->add_option("--calib-seed", gen_calib_seed, "Seed of the synthetic calibration source")->capture_default_str();
  gen->add_option("--out", gen_out, "Output model file")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Profile every valid split point and write the profile CSV");
  std::string an_model, an_out;
  std::uint32_t an_calib = 64;
  std::uint64_t an_calib_seed = 1;
  double an_rate = 0.0;
  double an_rtt_ms = kReferenceRttSeconds * 1000.0;
  analyze->add_option("--model", an_model, "Model file (CIMF)")->required();
  analyze->add_option("--calib", an_calib, "Calibration images (>= 16)")->capture_default_str();
  analyze->add_option("--calib-seed", an_calib_seed, "Seed of the synthetic calibration source")->capture_default_str();
  analyze->add_option("--out", an_out, "Output CSV file (default: stdout)");
  analyze->add_option("--recommend", an_rate, "Also rank splits for this upload rate in KB/s (printed to stderr)");
  analyze->add_option("--rtt-ms", an_rtt_ms, "Round-trip time used by --recommend")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve tail inference over TCP");
  std::string sv_model, sv_listen = "127.0.0.1:7878";
  unsigned sv_top_k = 5;
  serve->add_option("--model", sv_model, "Model file (CIMF)")->required();
  serve->add_option("--listen", sv_listen, "Listen address HOST:PORT")->capture_default_str();
  serve->add_option("--top-k", sv_top_k, "Classes returned per frame")->capture_default_str()->check(CLI::Range(1, 255));

  // infer
  auto* infer = app.add_subcommand("infer", "Run one shared inference against a server");
  std::string in_model, in_connect, in_split, in_codec = "u8", in_input = "synth:0";
  std::uint64_t in_synth_seed = 1;
  unsigned in_timeout_ms = 10000;
  infer->add_option("--model", in_model, "Model file (CIMF)")->required();
  infer->add_option("--connect", in_connect, "Server address HOST:PORT")->required();
  infer->add_option("--split", in_split, "Split layer name, or 'input' for cloud-only")->required();
  infer->add_option("--codec", in_codec, "Feature codec")->capture_default_str()->check(CLI::IsMember(kCodecNames));
  infer->add_option("--input", in_input, "PGM/PPM image file or synth:INDEX")->capture_default_str();
  infer->add_option("--synth-seed", in_synth_seed, "Seed of the synthetic source for synth:INDEX")->capture_default_str();
  infer->add_option("--timeout-ms", in_timeout_ms, "Connect and reply timeout")->capture_default_str();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Measure and predict total inference time over a range of upload rates");
  std::string sw_model, sw_rates = "50..3000:50", sw_modes = "mobile_only,cloud_only,shared_f32,shared_u8",
                        sw_split = "block1_relu", sw_timing, sw_out;
  std::uint32_t sw_frames = 5;
  bool sw_simulate = false, sw_predict_only = false;
  sweep->add_option("--model", sw_model, "Model file (CIMF)")->required();
  sweep->add_option("--rates", sw_rates, "Upload rates LO..HI:STEP in KB/s (1 KB = 1000 bytes)")->capture_default_str();
  sweep->add_option("--modes", sw_modes, "Comma-separated modes: mobile_only, cloud_only, shared_f32, shared_u8, shared_u8h, or all")
      ->capture_default_str();
  sweep->add_option("--frames", sw_frames, "Frames per row (>= 3; the first is a warm-up)")->capture_default_str();
  sweep->add_option("--split", sw_split, "Split layer for the shared modes")->capture_default_str();
  sweep->add_flag("--simulate", sw_simulate, "Use the deterministic virtual-clock link instead of real sockets");
  sweep->add_flag("--predict-only", sw_predict_only, "Skip measurement; emit predictions only");
  sweep->add_option("--timing", sw_timing, "Timing config file (key = value)");
  sweep->add_option("--out", sw_out, "Output CSV file (default: stdout)");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Compare sequential and pipelined throughput at one rate");
  std::string pp_model, pp_split = "block1_relu", pp_codec = "u8", pp_timing;
  double pp_rate = 3000.0;
  std::uint32_t pp_frames = 20;
  bool pp_simulate = false;
  pipe->add_option("--model", pp_model, "Model file (CIMF)")->required();
  pipe->add_option("--rate", pp_rate, "Upload rate in KB/s")->capture_default_str()->check(CLI::PositiveNumber);
  pipe->add_option("--split", pp_split, "Split layer name")->capture_default_str();
  pipe->add_option("--codec", pp_codec, "Feature codec")->capture_default_str()->check(CLI::IsMember(kCodecNames));
  pipe->add_option("--frames", pp_frames, "Frames per run (>= 10)")->capture_default_str();
  pipe->add_flag("--simulate", pp_simulate, "Use the deterministic virtual-clock link instead of real sockets");
  pipe->add_option("--timing", pp_timing, "Timing config file (key = value)");

  // demo
  auto* demo = app.add_subcommand("demo", "Run a live session with an HTTP control API");
  std::string dm_model, dm_connect, dm_control = "127.0.0.1:8080", dm_split = "block1_relu", dm_codec = "u8",
                        dm_mode = "shared", dm_source = "synthetic", dm_static;
  bool dm_simulate = false;
  double dm_rate = kDefaultRateBytesPerSecond / kBytesPerKB, dm_rtt_ms = kReferenceRttSeconds * 1000.0;
  std::uint64_t dm_frames = 0;
  unsigned dm_interval_ms = 0;
  demo->add_option("--model", dm_model, "Model file (CIMF)")->required();
  auto* dm_connect_opt = demo->add_option("--connect", dm_connect, "Server address HOST:PORT");
  auto* dm_simulate_opt =
      demo->add_flag("--simulate", dm_simulate, "Run an in-process server behind a throttled link instead of --connect");
  dm_connect_opt->excludes(dm_simulate_opt);
  demo->add_option("--control", dm_control, "Control API listen address HOST:PORT")->capture_default_str();
  demo->add_option("--split", dm_split, "Initial split layer")->capture_default_str();
  demo->add_option("--codec", dm_codec, "Initial codec")->capture_default_str()->check(CLI::IsMember(kCodecNames));
  demo->add_option("--mode", dm_mode, "Initial mode: mobile_only, cloud_only or shared")->capture_default_str();
  demo->add_option("--source", dm_source, "'synthetic' or a directory of PGM/PPM images")->capture_default_str();
  demo->add_option("--rate", dm_rate, "Upload rate in KB/s for --simulate")->capture_default_str()->check(CLI::PositiveNumber);
  demo->add_option("--rtt-ms", dm_rtt_ms, "Round-trip time for --simulate")->capture_default_str()->check(CLI::NonNegativeNumber);
  demo->add_option("--frames", dm_frames, "Stop after this many frames (0 = run until interrupted)")->capture_default_str();
  demo->add_option("--interval-ms", dm_interval_ms, "Minimum time between frame starts")->capture_default_str();
  demo->add_option("--static", dm_static, "Directory of dashboard files served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      if (gen_calib != 0 && gen_calib < 16) throw UsageError("--calib must be 0 or >= 16");
      ModelGraph model = build_microresnet(gen_seed);
      if (gen_calib) model = calibrate_batchnorm(model, SyntheticSource{gen_calib_seed, gen_calib, model.input_shape()});
      save_model_file(model, gen_out);
      std::cout << "model_hash=" << hex64(model.hash()) << "\n";
      return 0;
    }

    if (*analyze) {
      if (an_calib < 16) throw UsageError("--calib must be >= 16");
      if (an_rate < 0.0) throw UsageError("--recommend must be > 0");
      const ModelGraph model = load_model_file(an_model);
      const auto report = profile_splits(model, SyntheticSource{an_calib_seed, an_calib, model.input_shape()});
      if (report.uncalibrated) spdlog::warn("model BatchNorm statistics are uncalibrated; run gen-model with --calib");
      write_output(an_out, profiles_csv(report.profiles));
      if (an_rate > 0.0) {
        const auto timing = calibrate_timing(model, TimingConfig{});
        for (const auto& r : recommend_split(report.profiles, {an_rate * kBytesPerKB, an_rtt_ms / 1000.0}, timing))
          std::cerr << r.rank << ". " << r.layer_name << " " << codec_name(r.codec) << " " << r.predicted_total_ms
                    << " ms\n";
      }
      return 0;
    }

    if (*serve) {
      const auto address = net::parse_address(sv_listen);
      const ModelGraph model = load_model_file(sv_model);
      TcpServer server(model, address, ServerOptions{static_cast<std::uint8_t>(sv_top_k)});
      std::cout << "listening on " << address.host << ":" << server.port() << " model_hash=" << hex64(model.hash())
                << std::endl;
      server.start();
      wait_for_signal();
      server.stop();
      return 0;
    }

    if (*infer) {
      const auto codec = *parse_codec(in_codec);
      const ModelGraph model = load_model_file(in_model);
      const auto split = resolve_split(model, in_split);
      const Tensor input = load_input(model, in_input, in_synth_seed);
      const auto r = client_infer(model, in_connect, input, split, split ? codec : CodecId::Float32Raw,
                                  ClientOptions{std::chrono::milliseconds(in_timeout_ms)});
      std::printf("frame_id=%u split=%s codec=%s\n", r.result.frame_id, in_split.c_str(),
                  std::string(codec_name(split ? codec : CodecId::Float32Raw)).c_str());
      for (const auto& c : r.result.top_k) std::printf("class=%u score=%.6f\n", c.class_id, c.score);
      std::printf("t_head_ms=%.3f t_encode_ms=%.3f t_upload_ms=%.3f t_remainder_ms=%.3f t_total_ms=%.3f\n",
                  r.timing.head_s * 1e3, r.timing.encode_s * 1e3, r.timing.upload_s * 1e3, r.timing.remainder_s * 1e3,
                  r.timing.total_s * 1e3);
      std::printf("upload_bytes=%zu payload_bytes=%zu server_compute_us=%u\n", r.timing.upload_bytes,
                  r.timing.payload_bytes, r.result.server_compute_us);
      return 0;
    }

    if (*sweep) {
      SweepOptions opts;
      try {
        opts.rates_kbps = parse_rate_range(sw_rates);
        opts.modes = parse_sweep_modes(sw_modes);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      if (sw_frames < 3) throw UsageError("--frames must be >= 3");
      opts.frames = sw_frames;
      opts.link = sw_simulate ? LinkMode::Simulated : LinkMode::Real;
      opts.measure = !sw_predict_only;
      const ModelGraph model = load_model_file(sw_model);
      opts.split = model.layer(resolve_shared_split(model, sw_split)).name;
      const auto timing = calibrate_timing(model, timing_config(sw_timing, sw_simulate));
      const auto result = run_sweep(model, timing, opts);
      write_output(sw_out, sweep_csv(result));

      const double lo = opts.rates_kbps.front() * kBytesPerKB, hi = opts.rates_kbps.back() * kBytesPerKB;
      const StrategyPoint mobile{Strategy::MobileOnly};
      const auto k = model.split_by_name(opts.split);
      for (auto codec : {CodecId::Float32Raw, CodecId::U8Quant}) {
        const auto point = shared_point(timing, k, predicted_upload_bytes(model, k, codec));
        const auto x = find_crossover(point, mobile, timing, lo, hi);
        if (x)
          spdlog::info("shared_{} beats mobile_only above {:.3f} KB/s", codec_name(codec), *x / kBytesPerKB);
        else
          spdlog::info("shared_{} never beats mobile_only in the tested range", codec_name(codec));
      }
      return 0;
    }

    if (*pipe) {
      if (pp_frames < 10) throw UsageError("--frames must be >= 10");
      const ModelGraph model = load_model_file(pp_model);
      PipelineOptions opts;
      opts.split = resolve_shared_split(model, pp_split);
      opts.codec = *parse_codec(pp_codec);
      opts.rate_bytes_per_s = pp_rate * kBytesPerKB;
      opts.frames = pp_frames;
      opts.link = pp_simulate ? LinkMode::Simulated : LinkMode::Real;
      const auto timing = calibrate_timing(model, timing_config(pp_timing, pp_simulate));
      const auto r = run_pipelined(model, timing, opts);
      std::printf("fps_sequential=%.6f fps_pipelined=%.6f head_stage_ms=%.6f network_stage_ms=%.6f\n",
                  r.fps_sequential, r.fps_pipelined, r.head_stage_s * 1e3, r.network_stage_s * 1e3);
      return 0;
    }

    if (*demo) {
      if (!dm_simulate && dm_connect.empty() && parse_strategy(dm_mode) != Strategy::MobileOnly)
        throw UsageError("demo needs --connect ADDR or --simulate");
      const auto control_address = net::parse_address(dm_control);
      (void)control_address;
      const ModelGraph model = load_model_file(dm_model);

      SessionOptions opts;
      ConfigRequest initial{dm_split, dm_codec, dm_mode};
      std::unique_ptr<TcpServer> local_server;
      if (dm_simulate) {
        const LinkModel link{dm_rate * kBytesPerKB, dm_rtt_ms / 1000.0};
        link.validate();
        local_server = std::make_unique<TcpServer>(model, net::parse_address("127.0.0.1:0"));
        local_server->start();
        const net::Address addr{"127.0.0.1", local_server->port()};
        // The throttle carries the whole round trip on the uplink.
        opts.connect = [addr, link] {
          return std::make_unique<ThrottledChannel>(SocketChannel::connect(addr, std::chrono::seconds(2)), link);
        };
        opts.initial.link = LinkModel{link.rate_bytes_per_s, link.one_way_delay_s / 2};
      } else if (!dm_connect.empty()) {
        const auto addr = net::parse_address(dm_connect);
        opts.connect = [addr] { return SocketChannel::connect(addr, std::chrono::seconds(2)); };
      }
      if (dm_frames) opts.max_frames = dm_frames;
      opts.frame_interval = std::chrono::milliseconds(dm_interval_ms);

      InputSource source = dm_source == "synthetic"
                               ? InputSource::synthetic(SyntheticSource{1, 64, model.input_shape()})
                               : InputSource::directory(dm_source, model.input_shape());
      // Validate the initial selection with the same rules as POST /config.
      SessionOptions probe_opts;
      probe_opts.connect = opts.connect;
      probe_opts.initial.mode = Strategy::MobileOnly;
      SessionConfig cfg;
      try {
        Session probe(model, InputSource::synthetic({}), probe_opts);
        cfg = probe.resolve(initial);
      } catch (const ConfigError& e) {
        std::string valid;
        for (const auto& v : e.valid_values()) valid += (valid.empty() ? "" : ", ") + v;
        throw UsageError(std::string(e.what()) + "; valid values: " + valid);
      }
      cfg.link = opts.initial.link;
      opts.initial = cfg;

      Session session(model, std::move(source), std::move(opts));
      ControlOptions copts;
      copts.listen = dm_control;
      if (!dm_static.empty()) copts.static_dir = dm_static;
      ControlServer control(session, copts);
      control.start();
      std::cout << "control API on http://" << control_address.host << ":" << control.port() << "/" << std::endl;
      session.start();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      while (!g_interrupted && session.state() != ConnectionState::Stopped)
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      session.stop();
      control.stop();
      if (local_server) local_server->stop();
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
