#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splitwire/bytes.hpp"
#include "splitwire/graph.hpp"
#include "splitwire/latency.hpp"
#include "splitwire/link.hpp"
#include "splitwire/wire.hpp"
#include "splitwire/zoo.hpp"

namespace splitwire {

struct LayerProfile {
  std::uint32_t layer_id = 0;
  std::string layer_name;
  std::uint64_t cumulative_flops = 0;
  std::uint64_t bytes_f32 = 0;
  std::uint64_t bytes_u8 = 0;
  double entropy_bits = 0.0;          // order-0 entropy of the u8 codes
  double est_compressed_bytes = 0.0;  // bytes_u8 * entropy_bits / 8
  double stability = 0.0;             // 1 = unchanged under input jitter
};

struct ProfileOptions {
  // Applied to every calibration image to form its "nearby frame".
  Perturbation jitter{0.25, 1};
};

struct ProfileReport {
  std::vector<LayerProfile> profiles;  // one per valid split, ascending id
  bool uncalibrated = false;           // BatchNorm statistics still at init values
};

ProfileReport profile_splits(const ModelGraph& model, const SyntheticSource& calibration,
                             const ProfileOptions& options = {});

// Order-0 entropy in bits/symbol of the pooled histogram of several code buffers.
double code_entropy_bits(std::span<const Bytes> codes);

// 1 - min(1, |t - t'| / (|t| + 1e-9)) with L2 norms.
double stability_score(const Tensor& t, const Tensor& perturbed);

struct LinkProfile {
  double rate_bytes_per_s = kDefaultRateBytesPerSecond;
  double rtt_s = kReferenceRttSeconds;
};

struct SplitRecommendation {
  std::uint32_t layer_id = 0;
  std::string layer_name;
  CodecId codec = CodecId::U8QuantHuffman;
  double predicted_total_ms = 0.0;
  std::uint32_t rank = 0;  // 1 = best
};

// Predicts t_head + rtt + est_compressed_bytes/rate + t_tail for every profile and
// sorts ascending; ties go to fewer u8 bytes, then the lower layer id.
std::vector<SplitRecommendation> recommend_split(std::span<const LayerProfile> profiles, const LinkProfile& link,
                                                 const TimingModel& timing);

// Header: layer_id,layer_name,cum_flops,bytes_f32,bytes_u8,entropy_bits,est_bytes,stability
std::string profiles_csv(std::span<const LayerProfile> profiles);

}  // namespace splitwire
