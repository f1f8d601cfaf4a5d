#include "splitwire/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/quant.hpp"

namespace splitwire {

double code_entropy_bits(std::span<const Bytes> codes) {
  Histogram hist{};
  for (const auto& c : codes)
    for (auto b : c) ++hist[b];
  return order0_entropy(hist);
}

double stability_score(const Tensor& t, const Tensor& perturbed) {
  if (t.shape() != perturbed.shape()) throw ShapeError("stability needs equal shapes");
  double diff = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = static_cast<double>(t[i]) - perturbed[i];
    diff += d * d;
  }
  const double ratio = std::sqrt(diff) / (l2_norm(t.values()) + 1e-9);
  return 1.0 - std::min(1.0, ratio);
}

ProfileReport profile_splits(const ModelGraph& model, const SyntheticSource& calibration,
                             const ProfileOptions& options) {
  if (calibration.count < 16) throw Error("profiling needs at least 16 calibration images");
  const auto& splits = model.valid_splits();
  const auto flops = count_flops(model);

  // acts[s][i]: activation at split s for calibration image i.
  std::vector<std::vector<Tensor>> acts(splits.size());
  std::vector<double> stability(splits.size(), 0.0);
  for (std::uint32_t i = 0; i < calibration.count; ++i) {
    auto full = forward(model, generate_input(calibration, i).image);
    auto jittered = forward(model, generate_input(calibration, i, options.jitter).image);
    for (std::size_t s = 0; s < splits.size(); ++s) {
      stability[s] += stability_score(full[splits[s]], jittered[splits[s]]);
      acts[s].push_back(std::move(full[splits[s]]));
    }
  }

  ProfileReport report;
  report.uncalibrated = batchnorm_uncalibrated(model);
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto id = splits[s];
    const auto q = estimate_quant_params(acts[s]);
    std::vector<Bytes> codes;
    codes.reserve(acts[s].size());
    for (const auto& t : acts[s]) codes.push_back(quantize(t, q));

    LayerProfile p;
    p.layer_id = id;
    p.layer_name = model.layer(id).name;
    p.cumulative_flops = flops[id].cumulative;
    p.bytes_u8 = element_count(model.output_shape(id));
    p.bytes_f32 = 4 * p.bytes_u8;
    p.entropy_bits = code_entropy_bits(codes);
    p.est_compressed_bytes = static_cast<double>(p.bytes_u8) * p.entropy_bits / 8.0;
    p.stability = std::clamp(stability[s] / calibration.count, 0.0, 1.0);
    report.profiles.push_back(std::move(p));
  }
  return report;
}

std::vector<SplitRecommendation> recommend_split(std::span<const LayerProfile> profiles, const LinkProfile& link,
                                                 const TimingModel& timing) {
  if (profiles.empty()) throw Error("recommend_split needs at least one profile");
  TimingModel tm = timing;
  tm.rtt_s = link.rtt_s;

  struct Scored {
    const LayerProfile* profile;
    double seconds;
  };
  std::vector<Scored> scored;
  for (const auto& p : profiles) {
    const auto point = shared_point(tm, p.layer_id, p.est_compressed_bytes);
    scored.push_back({&p, predict_total(point, tm, link.rate_bytes_per_s)});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.seconds != b.seconds) return a.seconds < b.seconds;
    if (a.profile->bytes_u8 != b.profile->bytes_u8) return a.profile->bytes_u8 < b.profile->bytes_u8;
    return a.profile->layer_id < b.profile->layer_id;
  });

  std::vector<SplitRecommendation> out;
  for (std::size_t i = 0; i < scored.size(); ++i)
    out.push_back({scored[i].profile->layer_id, scored[i].profile->layer_name, CodecId::U8QuantHuffman,
                   scored[i].seconds * 1000.0, static_cast<std::uint32_t>(i + 1)});
  return out;
}

std::string profiles_csv(std::span<const LayerProfile> profiles) {
  std::string out = "layer_id,layer_name,cum_flops,bytes_f32,bytes_u8,entropy_bits,est_bytes,stability\n";
  char buf[512];
  for (const auto& p : profiles) {
    std::snprintf(buf, sizeof buf, "%u,%s,%llu,%llu,%llu,%.6f,%.1f,%.6f\n", p.layer_id, p.layer_name.c_str(),
                  static_cast<unsigned long long>(p.cumulative_flops), static_cast<unsigned long long>(p.bytes_f32),
                  static_cast<unsigned long long>(p.bytes_u8), p.entropy_bits, p.est_compressed_bytes, p.stability);
    out += buf;
  }
  return out;
}

}  // namespace splitwire
