// Acceptance suite: one PASS/FAIL line per criterion. Exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "../support.hpp"
#include "splitwire/channel.hpp"
#include "splitwire/client.hpp"
#include "splitwire/codec.hpp"
#include "splitwire/engine.hpp"
#include "splitwire/experiments.hpp"
#include "splitwire/huffman.hpp"
#include "splitwire/latency.hpp"
#include "splitwire/log.hpp"
#include "splitwire/quant.hpp"
#include "splitwire/server.hpp"

using namespace splitwire;
using namespace testing_support;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    if (pass) detail.str("");
    pass = false;
    detail << why << "; ";
  }
};

using Clock = std::chrono::steady_clock;

int report(const char* name, const std::function<void(Outcome&)>& body, double limit_s = 0.0) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.fail(std::string("exception: ") + e.what());
  }
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && elapsed >= limit_s) {
    std::ostringstream why;
    why << "runtime " << elapsed << " s exceeds " << limit_s << " s";
    o.fail(why.str());
  }
  std::printf("%s  %-22s %s(%.2f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.str().c_str(), elapsed);
  std::fflush(stdout);
  return o.pass ? 0 : 1;
}

// Box-Muller over SplitMix64, so the sample set is identical on every platform.
std::vector<double> standard_normal(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> out;
  while (out.size() < n) {
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    out.push_back(r * std::cos(2 * M_PI * u2));
    if (out.size() < n) out.push_back(r * std::sin(2 * M_PI * u2));
  }
  return out;
}

double entropy_bits(const Bytes& data) {
  std::map<std::uint8_t, double> counts;
  for (auto b : data) counts[b] += 1;
  double h = 0;
  for (const auto& [sym, c] : counts) h -= c / data.size() * std::log2(c / data.size());
  return h;
}

void split_equivalence(Outcome& o) {
  const auto& model = seed42();
  std::size_t checks = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Tensor x = random_tensor(model.input_shape(), 1000 + i, 0.0, 1.0);
    const Tensor full = forward(model, x).back();
    for (std::uint32_t k : model.valid_splits()) {
      const Tensor head = forward_range(model, x, 0, k);
      const Tensor out = forward_range(model, head, k + 1, model.last());
      ++checks;
      if (!out.bit_equal(full)) o.fail("split " + model.layer(k).name + " input " + std::to_string(i) + " differs");
    }
  }
  o.detail << model.valid_splits().size() << " splits x 100 inputs, " << checks << " bit-exact comparisons ";
}

void quantizer_bounds(Outcome& o) {
  const auto q = QuantParams::from_stats(0.1, 0.9);
  const double lo = q.lo, hi = q.hi, half = (hi - lo) / 510.0;
  double worst = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * i / (n - 1);
    worst = std::max(worst, std::abs(x - dequantize_value(quantize_value(x, q), q)));
  }
  if (worst > half * (1 + 1e-12)) o.fail("max error " + std::to_string(worst) + " > half step");
  int fixed = 0;
  for (int c = 0; c < 256; ++c) fixed += quantize_value(dequantize_value(std::uint8_t(c), q), q) == c;
  if (fixed != 256) o.fail(std::to_string(256 - fixed) + " codes not fixed");
  o.detail << "max error " << worst / half << " half-steps over 1e5 points, " << fixed << "/256 fixed codes ";
}

void four_x(Outcome& o) {
  const auto& model = seed42();
  const auto acts = forward(model, generate_input({1, 64, model.input_shape()}, 0).image);
  for (std::uint32_t k : model.valid_splits()) {
    const auto n = acts[k].size();
    const auto f = make_tensor_frame(1, std::uint16_t(k), CodecId::Float32Raw, acts[k]);
    const auto q = make_tensor_frame(1, std::uint16_t(k), CodecId::U8Quant, acts[k]);
    if (q.payload.size() != n || f.payload.size() != 4 * n) o.fail("split " + model.layer(k).name);
    if (decode_frame(encode_frame(q)).payload.size() != n) o.fail("wire round trip at " + model.layer(k).name);
  }
  o.detail << "u8 payload = N, f32 payload = 4N at all " << model.valid_splits().size() << " splits ";
}

void three_sigma(Outcome& o) {
  const auto samples = standard_normal(100000, 2019);
  std::vector<float> v(samples.begin(), samples.end());
  const auto q = estimate_quant_params(std::span<const float>(v));
  std::size_t outside = 0;
  for (float x : v) outside += x < q.lo || x > q.hi;
  const double frac = double(outside) / v.size();
  if (frac > 0.01) o.fail("fraction outside " + std::to_string(frac));
  o.detail << "mu=" << q.mu << " sigma=" << q.sigma << " outside=" << frac * 100 << "% of 1e5 ";
}

void entropy_coder(Outcome& o) {
  SplitMix64 rng(77);
  std::vector<Bytes> buffers;
  for (int i = 0; i < 1000; ++i) {
    Bytes b(1 + rng() % 4096);
    const unsigned alphabet = 1 + unsigned(rng() % 256);
    for (auto& x : b) x = std::uint8_t(rng() % alphabet);
    buffers.push_back(std::move(b));
  }
  // Structured: runs, ramps, geometric skew, and quantized activations.
  const auto& model = seed42();
  for (int i = 0; i < 100; ++i) {
    Bytes b;
    switch (i % 4) {
      case 0: b.assign(1 + i * 37, std::uint8_t(i)); break;
      case 1:
        for (int j = 0; j < 500 + i * 13; ++j) b.push_back(std::uint8_t(j / (1 + i % 7)));
        break;
      case 2:
        for (int j = 0; j < 2000; ++j) {
          int s = 0;
          while (s < 255 && rng.uniform() < 0.6) ++s;
          b.push_back(std::uint8_t(s));
        }
        break;
      default: {
        const auto k = model.valid_splits()[std::size_t(i / 4) % model.valid_splits().size()];
        const Tensor t = forward_range(model, generate_input({5, 100, model.input_shape()}, std::uint32_t(i)).image, 0, k);
        b = quantize(t, estimate_quant_params(t.values()));
      }
    }
    buffers.push_back(std::move(b));
  }
  std::size_t ok = 0;
  for (const auto& d : buffers) {
    const Bytes s = entropy_encode(d);
    if (entropy_decode(s) != d) {
      o.fail("round trip failed");
      continue;
    }
    double bits = 0;
    for (auto x : d) bits += s[4 + x];
    const double n = double(d.size()), h = entropy_bits(d);
    if (bits < n * h - 1e-6 || bits > n * (h + 1) + 1e-6) o.fail("payload bits outside [NH, N(H+1)]");
    else ++ok;
  }
  o.detail << ok << "/" << buffers.size() << " buffers lossless and within bounds ";
}

void fig2_sweep(Outcome& o) {
  const auto& model = seed42();
  const auto timing = calibrate_timing(model, TimingConfig{});
  SweepOptions opts;
  opts.rates_kbps = parse_rate_range("50..3000:50");
  opts.modes = {SweepMode::MobileOnly, SweepMode::CloudOnly, SweepMode::SharedF32, SweepMode::SharedU8};
  const auto result = run_sweep(model, timing, opts);
  std::map<SweepMode, std::vector<const SweepRow*>> rows;
  double worst = 0;
  for (const auto& r : result.rows) {
    if (!r.measured_ms) {
      o.fail("row without measurement");
      continue;
    }
    worst = std::max(worst, std::abs(*r.measured_ms - r.predicted_ms) / r.predicted_ms);
    rows[r.mode].push_back(&r);
  }
  if (worst > 0.01) o.fail("measured vs predicted off by " + std::to_string(worst * 100) + "%");
  for (const auto& [mode, list] : rows) {
    if (list.size() != 60) o.fail(std::string(sweep_mode_name(mode)) + " has wrong row count");
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (mode == SweepMode::MobileOnly && *list[i]->measured_ms != *list[0]->measured_ms) o.fail("mobile_only not flat");
      if (mode != SweepMode::MobileOnly && *list[i]->measured_ms > *list[i - 1]->measured_ms)
        o.fail(std::string(sweep_mode_name(mode)) + " increases with rate");
    }
  }
  const auto& u8 = rows[SweepMode::SharedU8];
  const auto& cloud = rows[SweepMode::CloudOnly];
  const auto& mobile = rows[SweepMode::MobileOnly];
  for (std::size_t i = 0; i < u8.size() && i < cloud.size(); ++i)
    if (*u8[i]->measured_ms > *cloud[i]->measured_ms) o.fail("shared_u8 slower than cloud_only at " + std::to_string(u8[i]->rate_kbps));

  // Crossover strictly inside the tested range, on the measured curves.
  std::optional<double> measured_cross;
  for (std::size_t i = 0; i < u8.size(); ++i)
    if (*u8[i]->measured_ms <= *mobile[i]->measured_ms) {
      if (i > 0) measured_cross = u8[i]->rate_kbps;
      break;
    }
  const auto split = model.split_by_name(opts.split);
  const auto point = shared_point(timing, split, predicted_upload_bytes(model, split, CodecId::U8Quant));
  const auto cross = find_crossover(point, StrategyPoint{Strategy::MobileOnly}, timing, 50 * kBytesPerKB, 3000 * kBytesPerKB);
  if (!measured_cross || !cross || *cross <= 50 * kBytesPerKB || *cross >= 3000 * kBytesPerKB)
    o.fail("no shared_u8 vs mobile_only crossover strictly inside 50..3000 KB/s");
  o.detail << "240 rows, max |meas-pred| " << worst * 100 << "%, shared_u8 beats mobile_only above "
           << (cross ? *cross / kBytesPerKB : 0.0) << " KB/s, shared_u8 <= cloud_only everywhere ";
}

void crossover_solver(Outcome& o) {
  SplitMix64 rng(450);
  int compared = 0;
  for (int i = 0; i < 20; ++i) {
    TimingModel m;
    m.rtt_s = rng.uniform(0.001, 0.02);
    m.t_mobile_full_s = rng.uniform(0.05, 0.3);
    m.t_server_full_s = rng.uniform(0.005, 0.05);
    m.input_bytes = rng.uniform(50, 1000) * kBytesPerKB;
    const double fixed = m.t_mobile_full_s * rng.uniform(0.2, 1.1);
    const StrategyPoint shared{Strategy::Shared, fixed * 0.6, std::max(0.0, fixed * 0.4 - m.rtt_s),
                               rng.uniform(1, 400) * kBytesPerKB};
    for (const StrategyPoint other : {StrategyPoint{Strategy::MobileOnly}, StrategyPoint{Strategy::CloudOnly}}) {
      const auto bisect = find_crossover(shared, other, m, 1 * kBytesPerKB, 3000 * kBytesPerKB);
      std::optional<double> brute;
      for (double r = 1; r <= 3000; r += 1)
        if (predict_total(shared, m, r * kBytesPerKB) <= predict_total(other, m, r * kBytesPerKB)) {
          brute = r * kBytesPerKB;
          break;
        }
      if (bool(bisect) != bool(brute)) o.fail("model " + std::to_string(i) + ": existence disagrees");
      else if (bisect && std::abs(*bisect - *brute) > kBytesPerKB) o.fail("model " + std::to_string(i) + ": off by > 1 KB/s");
      else ++compared;
    }
  }
  o.detail << compared << "/40 crossover queries on 20 random models agree with the 1 KB/s scan ";
}

void pipelining(Outcome& o) {
  const auto& model = seed42();
  const auto timing = calibrate_timing(model, TimingConfig{});
  int configs = 0;
  double worst = 0;
  for (std::uint32_t k : model.valid_splits())
    for (CodecId codec : {CodecId::Float32Raw, CodecId::U8Quant, CodecId::U8QuantHuffman})
      for (double kbps : {50.0, 450.0, 3000.0}) {
        PipelineOptions opts;
        opts.split = k;
        opts.codec = codec;
        opts.rate_bytes_per_s = kbps * kBytesPerKB;
        const auto r = run_pipelined(model, timing, opts);
        ++configs;
        if (r.fps_pipelined < r.fps_sequential) o.fail("pipelined slower at " + model.layer(k).name);
        const double ideal = 1.0 / std::max(r.head_stage_s, r.network_stage_s);
        worst = std::max(worst, std::abs(r.fps_pipelined - ideal) / ideal);
      }
  if (worst > 0.01) o.fail("pipelined fps deviates from 1/max(stage) by " + std::to_string(worst * 100) + "%");
  o.detail << configs << " configs, max deviation from 1/max(stage) " << worst * 100 << "% ";
}

void argmax_preservation(Outcome& o) {
  const auto& model = seed42();
  const SyntheticSource source{1, 256, model.input_shape()};
  std::map<std::uint32_t, int> agree;
  for (std::uint32_t i = 0; i < source.count; ++i) {
    const Tensor x = generate_input(source, i).image;
    const auto acts = forward(model, x);
    const auto top_float = argmax(acts.back().values());
    for (std::uint32_t k : model.valid_splits()) {
      const auto frame = decode_frame(encode_frame(make_tensor_frame(i, std::uint16_t(k), CodecId::U8Quant, acts[k])));
      const auto r = serve_frame(model, frame, 1);
      agree[k] += r.top_k.at(0).class_id == top_float;
    }
  }
  std::ostringstream per_split;
  for (const auto& [k, n] : agree) {
    per_split << model.layer(k).name << "=" << n << " ";
    if (n < 0.95 * 256) o.fail(model.layer(k).name + " agrees on " + std::to_string(n) + "/256 < 95%");
  }
  o.detail << "agreement out of 256: " << per_split.str();
}

void protocol_robustness(Outcome& o) {
  const auto& model = seed42();
  SplitMix64 rng(10000);
  std::vector<Bytes> seeds;
  for (std::uint32_t k : model.valid_splits())
    for (CodecId c : {CodecId::Float32Raw, CodecId::U8Quant, CodecId::U8QuantHuffman})
      seeds.push_back(encode_frame(build_frame(model, generate_input({2, 64, model.input_shape()}, k).image, k, c, 9)));
  const Bytes hello = encode_message(Hello{kProtocolVersion, model.hash()});
  int corrupted = 0, fuzzed = 0, results_from_valid = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    Bytes msg = seeds[rng() % seeds.size()];
    const int kind = int(rng() % 4);
    bool corrupt = true;
    if (kind == 0) {
      const int flips = 1 + int(rng() % 8);
      for (int f = 0; f < flips; ++f) msg[4 + rng() % (msg.size() - 4)] ^= std::uint8_t(1u << (rng() % 8));
    } else if (kind == 1) {
      msg.resize(rng() % msg.size());
    } else if (kind == 2) {
      for (auto& b : msg) b = std::uint8_t(rng());
      msg.resize(1 + rng() % 256);
    } else {
      // Structure-aware: random header bytes with a recomputed CRC.
      const std::size_t pos = 6 + rng() % std::min<std::size_t>(40, msg.size() - 10);
      msg[pos] = std::uint8_t(rng());
      const auto crc = crc32(ByteView(msg).subspan(4, msg.size() - 8));
      std::memcpy(msg.data() + msg.size() - 4, &crc, 4);
      corrupt = false;
    }
    // A flip can cancel itself out; only count genuinely altered messages.
    bool altered = true;
    for (const auto& s : seeds) altered = altered && s != msg;
    if (!altered) continue;

    ServerSession session(model);
    std::vector<Bytes> replies;
    try {
      session.feed(hello);
      replies = session.feed(msg);
    } catch (const std::exception& e) {
      o.fail(std::string("server threw: ") + e.what());
      continue;
    }
    for (const auto& r : replies) {
      const auto reply = decode_message(r);
      if (!std::holds_alternative<ResultFrame>(reply)) continue;
      if (corrupt) o.fail("ResultFrame for a corrupted frame (trial " + std::to_string(trial) + ")");
      else {
        // Must have been a well-formed frame.
        decode_frame(msg);
        ++results_from_valid;
      }
    }
    (corrupt ? corrupted : fuzzed) += 1;
  }

  // A live TCP server keeps serving after garbage on other connections.
  TcpServer server(model, net::parse_address("127.0.0.1:0"));
  server.start();
  for (int i = 0; i < 50; ++i) {
    auto ch = SocketChannel::connect({"127.0.0.1", server.port()});
    ch->send(hello);
    Bytes junk = seeds[std::size_t(i) % seeds.size()];
    junk[junk.size() / 2] ^= 0x10;
    ch->send(junk);
    ch->close();
  }
  const auto r = client_infer(model, "127.0.0.1:" + std::to_string(server.port()),
                              generate_input({2, 64, model.input_shape()}, 0).image, 9, CodecId::U8Quant);
  if (r.result.top_k.empty()) o.fail("server stopped answering after fuzzing");
  server.stop();
  o.detail << corrupted << " corrupted + " << fuzzed << " CRC-valid fuzzed messages, no crash, "
           << results_from_valid << " results only for well-formed frames ";
}

}  // namespace

int main() {
  init_logging();
  int failures = 0;
  failures += report("split-equivalence", split_equivalence, 10.0);
  failures += report("quantizer-bounds", quantizer_bounds, 1.0);
  failures += report("4x-reduction", four_x);
  failures += report("3-sigma-coverage", three_sigma);
  failures += report("entropy-coder", entropy_coder);
  failures += report("fig2-sweep", fig2_sweep, 60.0);
  failures += report("crossover-solver", crossover_solver);
  failures += report("pipelining", pipelining);
  failures += report("argmax-preservation", argmax_preservation);
  failures += report("protocol-robustness", protocol_robustness);
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
