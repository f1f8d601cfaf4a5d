#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "../support.hpp"
#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/experiments.hpp"
#include "splitwire/latency.hpp"

using namespace splitwire;
using namespace testing_support;

namespace {

constexpr double KB = kBytesPerKB;

TimingModel flat_model(double rtt_s, double t_mobile_s) {
  TimingModel m;
  m.rtt_s = rtt_s;
  m.t_mobile_full_s = t_mobile_s;
  return m;
}

StrategyPoint shared(double head, double tail, double bytes) { return {Strategy::Shared, head, tail, bytes}; }
const StrategyPoint kMobile{Strategy::MobileOnly};
const StrategyPoint kCloud{Strategy::CloudOnly};

// Smallest rate on a 1 KB/s grid where a is no slower than b.
std::optional<double> brute_crossover(const StrategyPoint& a, const StrategyPoint& b, const TimingModel& m,
                                      double lo_kbps, double hi_kbps) {
  for (double r = lo_kbps; r <= hi_kbps; r += 1.0)
    if (predict_total(a, m, r * KB) <= predict_total(b, m, r * KB)) return r * KB;
  return std::nullopt;
}

// Timing model over seed42 with all client time in layer 0 and all server time in
// the last layer, so t_head(k) and t_tail(k) are the given constants for any
// split k < last.
TimingModel injected(double head_s, double tail_s, double rtt_s) {
  const auto n = seed42().size();
  TimingModel m;
  m.client_layer_s.assign(n, 0.0);
  m.server_layer_s.assign(n, 0.0);
  m.client_layer_s[0] = head_s;
  m.server_layer_s[n - 1] = tail_s;
  m.rtt_s = rtt_s;
  m.input_bytes = predicted_upload_bytes(seed42(), std::nullopt, CodecId::Float32Raw);
  return m;
}

}  // namespace

TEST_CASE("predict_total worked example and limits") {
  const auto m = flat_model(0.005, 0.160);
  const auto p = shared(0.080, 0.010, 100 * KB);
  CHECK(predict_total(p, m, 1000 * KB) == doctest::Approx(0.195).epsilon(1e-12));
  CHECK(predict_total(p, m, INFINITY) == doctest::Approx(0.095).epsilon(1e-12));
  CHECK(predict_total(kMobile, m, 1.0) == 0.160);
  CHECK(predict_total(kMobile, m, 1e9) == 0.160);
  CHECK_THROWS_AS(predict_total(p, m, 0.0), Error);
  CHECK_THROWS_AS(predict_total(p, m, -5.0), Error);
  auto c = m;
  c.input_bytes = 12000;
  c.t_server_full_s = 0.020;
  CHECK(predict_total(kCloud, c, 1000 * KB) == doctest::Approx(0.005 + 0.012 + 0.020).epsilon(1e-12));
}

TEST_CASE("crossover against mobile_only: closed form") {
  const auto m = flat_model(0.005, 0.160);
  const auto r = find_crossover(shared(0.080, 0.010, 100 * KB), kMobile, m, 50 * KB, 3000 * KB);
  REQUIRE(r);
  // 95 + 100/R = 160 ms with R in KB/ms.
  CHECK(*r / KB == doctest::Approx(100.0 / 65.0 * 1000.0).epsilon(1e-6));
  CHECK(*r / KB == doctest::Approx(1538.46).epsilon(1e-5));
}

TEST_CASE("no crossover when fixed costs already exceed mobile_only") {
  const auto m = flat_model(0.005, 0.160);
  CHECK_FALSE(find_crossover(shared(0.150, 0.010, 1 * KB), kMobile, m, 1 * KB, 1e9));
  CHECK_THROWS_AS(find_crossover(kMobile, kCloud, m, 10.0, 5.0), Error);
  CHECK_THROWS_AS(find_crossover(kMobile, kCloud, m, 0.0, 5.0), Error);
}

TEST_CASE("shared with a quarter of the upload beats cloud_only termwise at every rate") {
  auto m = flat_model(0.005, 0.160);
  m.input_bytes = 400 * KB;
  m.t_server_full_s = 0.050;
  const auto p = shared(0.030, 0.020, 100 * KB);
  for (double r = 50; r <= 3000; r += 50) CHECK(predict_total(p, m, r * KB) <= predict_total(kCloud, m, r * KB));
  CHECK(find_crossover(p, kCloud, m, 50 * KB, 3000 * KB) == 50 * KB);
}

TEST_CASE("bisection agrees with a 1 KB/s brute-force scan on 20 random models") {
  std::mt19937_64 gen(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int found = 0;
  for (int i = 0; i < 20; ++i) {
    auto m = flat_model(0.001 + 0.02 * u(gen), 0.05 + 0.3 * u(gen));
    m.input_bytes = (50 + 1000 * u(gen)) * KB;
    m.t_server_full_s = 0.005 + 0.05 * u(gen);
    const double fixed = m.t_mobile_full_s * (0.2 + 0.9 * u(gen));
    const auto p = shared(fixed * 0.7, fixed * 0.3 - m.rtt_s * 0.5, (1 + 400 * u(gen)) * KB);
    for (const auto& other : {kMobile, kCloud}) {
      const auto bisect = find_crossover(p, other, m, 1 * KB, 3000 * KB);
      const auto brute = brute_crossover(p, other, m, 1, 3000);
      REQUIRE(bool(bisect) == bool(brute));
      if (!bisect) continue;
      ++found;
      CHECK(std::abs(*bisect - *brute) <= 1 * KB);
      CHECK(predict_total(p, m, *bisect) <= predict_total(other, m, *bisect) * (1 + 1e-9));
    }
  }
  CHECK(found >= 10);
}

TEST_CASE("timing config parsing") {
  const auto cfg = parse_timing_config(
      "# reference device\n"
      "t_mobile_full_ms = 100\n"
      "t_server_full_ms=25\n"
      "rtt_ms = 2.5  \n"
      "\n"
      "calibration = measured\n"
      "full_pass = calibrated\n"
      "client_gflops = 2\n"
      "server_gflops = 4\n"
      "measure_repeats = 3\n");
  CHECK(cfg.t_mobile_full_s == doctest::Approx(0.100));
  CHECK(cfg.t_server_full_s == doctest::Approx(0.025));
  CHECK(cfg.rtt_s == doctest::Approx(0.0025));
  CHECK(cfg.calibration == Calibration::Measured);
  CHECK(cfg.full_pass == FullPass::Calibrated);
  CHECK(cfg.client_flops_per_s == 2e9);
  CHECK(cfg.server_flops_per_s == 4e9);
  CHECK(cfg.measure_repeats == 3);
  const auto defaults = parse_timing_config("");
  CHECK(defaults.t_mobile_full_s == 0.160);
  CHECK(defaults.t_server_full_s == 0.020);
  CHECK(defaults.rtt_s == 0.005);
  CHECK_THROWS_AS(parse_timing_config("bogus = 1"), Error);
  CHECK_THROWS_AS(parse_timing_config("rtt_ms = -1"), Error);
  CHECK_THROWS_AS(parse_timing_config("rtt_ms 5"), Error);
  CHECK_THROWS_AS(parse_timing_config("calibration = guess"), Error);
  CHECK_THROWS_AS(parse_timing_config("t_mobile_full_ms = 0"), Error);
}

TEST_CASE("FLOP calibration divides layer FLOPs by the nominal rates") {
  const auto& model = seed42();
  const auto tm = calibrate_timing(model, TimingConfig{});
  REQUIRE(tm.client_layer_s.size() == model.size());
  const auto flops = count_flops(model);
  for (std::uint32_t i = 0; i < model.size(); ++i) {
    CHECK(tm.client_layer_s[i] == doctest::Approx(double(flops[i].flops) / 1e9).epsilon(1e-12));
    CHECK(tm.server_layer_s[i] == doctest::Approx(double(flops[i].flops) / 8e9).epsilon(1e-12));
  }
  CHECK(tm.t_head(model.last()) == doctest::Approx(double(flops.back().cumulative) / 1e9));
  CHECK(tm.t_tail(model.last()) == 0.0);
  CHECK(tm.t_mobile_full_s == 0.160);
  CHECK(tm.t_server_full_s == 0.020);
  CHECK(tm.input_bytes == 4 * 3 * 32 * 32 + tensor_frame_overhead(3, CodecId::Float32Raw));
  CHECK_THROWS_AS(tm.t_head(31), InvalidSplitError);

  TimingConfig calibrated;
  calibrated.full_pass = FullPass::Calibrated;
  const auto tc = calibrate_timing(model, calibrated);
  CHECK(tc.t_mobile_full_s == doctest::Approx(tm.t_head(model.last())));
  CHECK(tc.t_server_full_s == doctest::Approx(tm.t_tail(0) + tm.server_layer_s[0]));
}

TEST_CASE("measured calibration keeps the configured client/server ratio") {
  TimingConfig cfg;
  cfg.calibration = Calibration::Measured;
  cfg.measure_repeats = 3;
  const auto tm = calibrate_timing(seed42(), cfg);
  for (std::size_t i = 0; i < tm.client_layer_s.size(); ++i) {
    CHECK(tm.client_layer_s[i] >= 0.0);
    CHECK(tm.server_layer_s[i] == doctest::Approx(tm.client_layer_s[i] / 8.0));
  }
}

TEST_CASE("predicted upload bytes") {
  const auto& model = seed42();
  const auto split = model.split_by_name("block1_relu");
  const double n = double(element_count(model.output_shape(split)));
  CHECK(predicted_upload_bytes(model, split, CodecId::Float32Raw) == 4 * n + 34);
  CHECK(predicted_upload_bytes(model, split, CodecId::U8Quant) == n + 42);
  CHECK(predicted_upload_bytes(model, split, CodecId::U8QuantHuffman, 3.0) == 42 + 260 + std::ceil(n * 3.0 / 8));
  CHECK(predicted_upload_bytes(model, std::nullopt, CodecId::Float32Raw) == 12322);
}

TEST_CASE("rate ranges and mode lists") {
  const auto rates = parse_rate_range("50..3000:50");
  REQUIRE(rates.size() == 60);
  CHECK(rates.front() == 50);
  CHECK(rates.back() == 3000);
  CHECK(parse_rate_range("1..2:0.25").size() == 5);
  CHECK_THROWS_AS(parse_rate_range("10..5:1"), Error);
  CHECK_THROWS_AS(parse_rate_range("0..5:1"), Error);
  CHECK_THROWS_AS(parse_rate_range("1..5"), Error);
  CHECK(parse_sweep_modes("all").size() == 5);
  CHECK(parse_sweep_modes("mobile_only,shared_u8") ==
        std::vector<SweepMode>{SweepMode::MobileOnly, SweepMode::SharedU8});
  CHECK_THROWS_AS(parse_sweep_modes("shared_jpeg"), Error);
}

TEST_CASE("simulated sweep reproduces the qualitative Fig. 2 structure") {
  const auto& model = seed42();
  const auto timing = calibrate_timing(model, TimingConfig{});
  SweepOptions opts;
  opts.rates_kbps = parse_rate_range("50..3000:50");
  opts.modes = {SweepMode::MobileOnly, SweepMode::CloudOnly, SweepMode::SharedF32, SweepMode::SharedU8};
  const auto result = run_sweep(model, timing, opts);
  REQUIRE(result.rows.size() == 240);

  std::map<std::string, std::vector<const SweepRow*>> by_mode;
  for (const auto& row : result.rows) {
    REQUIRE(row.measured_ms);
    CHECK(std::abs(*row.measured_ms - row.predicted_ms) <= 0.01 * row.predicted_ms);
    by_mode[std::string(sweep_mode_name(row.mode))].push_back(&row);
  }
  for (const auto& [mode, rows] : by_mode) {
    REQUIRE(rows.size() == 60);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (mode == "mobile_only") CHECK(rows[i]->measured_ms == rows[0]->measured_ms);
      else CHECK(*rows[i]->measured_ms <= *rows[i - 1]->measured_ms);
    }
  }
  const auto& f32 = by_mode["shared_f32"];
  const auto& u8 = by_mode["shared_u8"];
  const auto& cloud = by_mode["cloud_only"];
  const auto& mobile = by_mode["mobile_only"];
  bool u8_crosses = *u8.front()->measured_ms > *mobile.front()->measured_ms &&
                    *u8.back()->measured_ms < *mobile.back()->measured_ms;
  CHECK(u8_crosses);
  for (std::size_t i = 0; i < 60; ++i) {
    CHECK(u8[i]->upload_bytes < f32[i]->upload_bytes);
    CHECK(*u8[i]->measured_ms <= *cloud[i]->measured_ms);
    CHECK(u8[i]->split_layer == "block1_relu");
    CHECK(cloud[i]->split_layer == "input");
    CHECK(mobile[i]->codec == "none");
  }

  const auto csv = sweep_csv(result);
  CHECK(csv.rfind("rate_kbps,mode,split_layer,codec,predicted_ms,measured_ms,upload_bytes\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 241);
  CHECK(sweep_csv(run_sweep(model, timing, opts)) == csv);
}

TEST_CASE("prediction-only sweeps leave measured_ms empty") {
  SweepOptions opts;
  opts.rates_kbps = {100, 200};
  opts.modes = {SweepMode::SharedU8H};
  opts.measure = false;
  const auto result = run_sweep(seed42(), calibrate_timing(seed42(), {}), opts);
  REQUIRE(result.rows.size() == 2);
  CHECK_FALSE(result.rows[0].measured_ms);
  CHECK(sweep_csv(result).find(",,") != std::string::npos);
}

TEST_CASE("sweep needs at least 3 frames") {
  SweepOptions opts;
  opts.rates_kbps = {100};
  opts.modes = {SweepMode::SharedU8};
  opts.frames = 2;
  CHECK_THROWS_AS(run_sweep(seed42(), calibrate_timing(seed42(), {}), opts), Error);
}

TEST_CASE("pipelining: 80 ms head, 115 ms network stage") {
  const auto& model = seed42();
  const auto split = model.split_by_name("block1_relu");
  const auto timing = injected(0.080, 0.010, 0.005);
  const double bytes = predicted_upload_bytes(model, split, CodecId::Float32Raw);
  PipelineOptions opts;
  opts.split = split;
  opts.codec = CodecId::Float32Raw;
  opts.rate_bytes_per_s = bytes / 0.100;
  const auto r = run_pipelined(model, timing, opts);
  CHECK(r.head_stage_s == doctest::Approx(0.080));
  CHECK(r.network_stage_s == doctest::Approx(0.115));
  CHECK(r.fps_sequential == doctest::Approx(1 / 0.195).epsilon(1e-6));
  CHECK(r.fps_pipelined == doctest::Approx(1 / 0.115).epsilon(1e-6));
}

TEST_CASE("pipelined fps equals 1/max(stage) and never loses to sequential") {
  const auto& model = seed42();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 12; ++i) {
    const auto timing = injected(0.001 + 0.1 * u(gen), 0.001 + 0.05 * u(gen), 0.001 + 0.02 * u(gen));
    PipelineOptions opts;
    opts.split = model.valid_splits()[i % 11];
    opts.codec = CodecId(i % 3);
    opts.rate_bytes_per_s = (20 + 3000 * u(gen)) * KB;
    opts.t_encode_s = 0.005 * u(gen);
    const auto r = run_pipelined(model, timing, opts);
    CHECK(r.fps_pipelined >= r.fps_sequential);
    CHECK(r.fps_pipelined == doctest::Approx(1 / std::max(r.head_stage_s, r.network_stage_s)).epsilon(0.01));
    CHECK(r.fps_sequential == doctest::Approx(1 / (r.head_stage_s + r.network_stage_s)).epsilon(0.01));
  }
}

TEST_CASE("pipeline needs at least 10 frames") {
  PipelineOptions opts;
  opts.split = 9;
  opts.frames = 9;
  CHECK_THROWS_AS(run_pipelined(seed42(), calibrate_timing(seed42(), {}), opts), Error);
}
