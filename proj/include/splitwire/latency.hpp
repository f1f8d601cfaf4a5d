#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splitwire/graph.hpp"
#include "splitwire/wire.hpp"
#include "splitwire/zoo.hpp"

namespace splitwire {

inline constexpr double kReferenceMobileFullSeconds = 0.160;
inline constexpr double kReferenceServerFullSeconds = 0.020;
inline constexpr double kReferenceRttSeconds = 0.005;

enum class Strategy { MobileOnly, CloudOnly, Shared };

std::string_view strategy_name(Strategy s);  // "mobile_only", "cloud_only", "shared"
std::optional<Strategy> parse_strategy(std::string_view name);

// Per-layer compute times on each side plus the network round trip.
struct TimingModel {
  std::vector<double> client_layer_s;
  std::vector<double> server_layer_s;
  double t_mobile_full_s = kReferenceMobileFullSeconds;
  double t_server_full_s = kReferenceServerFullSeconds;
  double rtt_s = kReferenceRttSeconds;
  double input_bytes = 0.0;  // cloud-only upload size

  // Client compute for layers 0..k.
  double t_head(std::uint32_t k) const;
  // Server compute for layers k+1..end.
  double t_tail(std::uint32_t k) const;
  void validate() const;
};

// One point of the strategy space. t_head/t_tail/upload_bytes are only read for
// Shared; CloudOnly uploads model.input_bytes.
struct StrategyPoint {
  Strategy strategy = Strategy::Shared;
  double t_head_s = 0.0;
  double t_tail_s = 0.0;
  double upload_bytes = 0.0;
};

StrategyPoint shared_point(const TimingModel& model, std::uint32_t split, double upload_bytes);

// mobile_only: t_mobile_full
// cloud_only:  rtt + input_bytes/rate + t_server_full
// shared:      t_head + rtt + upload_bytes/rate + t_tail
// rate may be +infinity. Throws on rate <= 0.
double predict_total(const StrategyPoint& point, const TimingModel& model, double rate_bytes_per_s);

// Smallest rate in [lo, hi] where a is no slower than b, located by bisection to a
// relative tolerance of 1e-6. nullopt when a never wins inside the range. Assumes
// predict(a) - predict(b) changes sign at most once over the range, which holds
// for the formulas above.
std::optional<double> find_crossover(const StrategyPoint& a, const StrategyPoint& b, const TimingModel& model,
                                     double lo_bytes_per_s, double hi_bytes_per_s);

enum class Calibration {
  Flops,     // layer FLOPs at nominal client/server FLOP rates (deterministic)
  Measured,  // wall-clock per-layer time on this machine
};

// Where the mobile_only / cloud_only full-pass times come from.
enum class FullPass {
  Reference,   // t_mobile_full / t_server_full as configured
  Calibrated,  // sums of the calibrated per-layer times
};

struct TimingConfig {
  double t_mobile_full_s = kReferenceMobileFullSeconds;
  double t_server_full_s = kReferenceServerFullSeconds;
  double rtt_s = kReferenceRttSeconds;
  Calibration calibration = Calibration::Flops;
  FullPass full_pass = FullPass::Reference;
  // Nominal rates for Flops calibration; the default ratio matches 160 ms / 20 ms.
  double client_flops_per_s = 1e9;
  double server_flops_per_s = 8e9;
  std::uint32_t measure_repeats = 5;
};

// key = value lines (# comments): t_mobile_full_ms, t_server_full_ms, rtt_ms,
// calibration (flops|measured), full_pass (reference|calibrated), client_gflops,
// server_gflops, measure_repeats.
TimingConfig parse_timing_config(std::string_view text);
TimingConfig load_timing_config(const std::string& path);

// Median wall-clock seconds per layer over `repeats` full passes of `input`.
std::vector<double> measure_layer_seconds(const ModelGraph& model, const Tensor& input, std::uint32_t repeats);

// Per-layer head/tail times come from `calibration`: FLOPs over the nominal
// rates, or measured client times with the server faster by
// t_mobile_full / t_server_full.
TimingModel calibrate_timing(const ModelGraph& model, const TimingConfig& config,
                             const SyntheticSource& source = {});

// Predicted wire size of a TensorFrame message at `split` (nullopt = raw input).
// For U8QuantHuffman the payload is estimated from the code entropy in bits.
double predicted_upload_bytes(const ModelGraph& model, std::optional<std::uint32_t> split, CodecId codec,
                              double entropy_bits = 8.0);

}  // namespace splitwire
