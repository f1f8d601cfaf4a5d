#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splitwire/graph.hpp"
#include "splitwire/latency.hpp"
#include "splitwire/link.hpp"
#include "splitwire/wire.hpp"
#include "splitwire/zoo.hpp"

namespace splitwire {

// 1 KB = 1000 bytes everywhere.
inline constexpr double kBytesPerKB = 1000.0;

enum class SweepMode { MobileOnly, CloudOnly, SharedF32, SharedU8, SharedU8H };

std::string_view sweep_mode_name(SweepMode mode);
std::optional<SweepMode> parse_sweep_mode(std::string_view name);
// Comma-separated list of mode names; "all" selects every mode.
std::vector<SweepMode> parse_sweep_modes(std::string_view list);

// "LO..HI:STEP" in KB/s, inclusive of HI when it lies on the grid.
std::vector<double> parse_rate_range(std::string_view text);

enum class LinkMode {
  Simulated,  // virtual clock, compute times injected from the timing model
  Real,       // loopback TCP through a real-time throttled channel
};

struct SweepOptions {
  std::vector<double> rates_kbps;
  std::vector<SweepMode> modes;
  std::uint32_t frames = 5;  // the first frame of each row is a discarded warm-up
  std::string split = "block1_relu";
  LinkMode link = LinkMode::Simulated;
  bool measure = true;  // false: predictions only
  SyntheticSource source{7, 64, {3, 32, 32}};
};

struct SweepRow {
  double rate_kbps = 0.0;
  SweepMode mode = SweepMode::MobileOnly;
  std::string split_layer;  // layer name, "input" for cloud_only, "none" for mobile_only
  std::string codec;        // "f32", "u8", "u8h" or "none"
  double predicted_ms = 0.0;
  std::optional<double> measured_ms;
  double upload_bytes = 0.0;  // mean whole-message bytes per frame
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

SweepResult run_sweep(const ModelGraph& model, const TimingModel& timing, const SweepOptions& options);

// Header: rate_kbps,mode,split_layer,codec,predicted_ms,measured_ms,upload_bytes
std::string sweep_csv(const SweepResult& result);

struct PipelineOptions {
  double rate_bytes_per_s = kDefaultRateBytesPerSecond;
  std::uint32_t split = 0;
  CodecId codec = CodecId::U8Quant;
  std::uint32_t frames = 20;
  LinkMode link = LinkMode::Simulated;
  double t_encode_s = 0.0;  // injected encode time (simulation only)
  SyntheticSource source{7, 64, {3, 32, 32}};
};

struct PipelineResult {
  double fps_sequential = 0.0;
  double fps_pipelined = 0.0;
  double head_stage_s = 0.0;     // head compute + encode
  double network_stage_s = 0.0;  // upload + rtt + tail compute
};

// Sequential: each frame starts after the previous result arrived. Pipelined: the
// head of frame i+1 runs while frame i is uploaded and served, with at most one
// frame in flight. Throughput is (n-1) / (last result - first result).
PipelineResult run_pipelined(const ModelGraph& model, const TimingModel& timing, const PipelineOptions& options);

}  // namespace splitwire
