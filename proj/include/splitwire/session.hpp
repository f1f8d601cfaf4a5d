#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "splitwire/channel.hpp"
#include "splitwire/client.hpp"
#include "splitwire/graph.hpp"
#include "splitwire/latency.hpp"
#include "splitwire/link.hpp"
#include "splitwire/wire.hpp"
#include "splitwire/zoo.hpp"

namespace splitwire {

inline constexpr std::uint32_t kNoSplit = 0xFFFFFFFFu;

// One processed frame. Trivially copyable so it can live in the lock-free ring.
struct FrameMetric {
  std::uint32_t frame_id = 0;
  std::int64_t timestamp_ms = 0;  // wall clock, Unix epoch
  Strategy mode = Strategy::Shared;
  std::uint32_t split_layer = kNoSplit;  // kNoSplit for mobile_only and cloud_only
  CodecId codec = CodecId::Float32Raw;
  double t_head_ms = 0.0;
  double t_upload_ms = 0.0;
  double t_server_ms = 0.0;
  double t_total_ms = 0.0;
  std::uint64_t upload_bytes = 0;
  std::uint16_t top1_class = 0;
  float top1_score = 0.0f;
  bool server_connected = false;
};

// Bounded single-producer ring of FrameMetric (oldest evicted). Every slot is a
// seqlock made of atomic words, so the producer never waits for readers and a
// reader never observes a torn record.
class MetricRing {
 public:
  static constexpr std::size_t kCapacity = 1024;

  void push(const FrameMetric& metric) noexcept;
  // Records with frame_id > since, oldest first.
  std::vector<FrameMetric> since(std::uint32_t frame_id) const;
  std::uint64_t total_pushed() const noexcept { return head_.load(std::memory_order_acquire); }
  std::size_t size() const noexcept;

 private:
  static constexpr std::size_t kWords = (sizeof(FrameMetric) + 7) / 8;
  struct Slot {
    std::atomic<std::uint64_t> seq{0};  // 2*index+1 while writing, 2*index+2 when stable
    std::array<std::atomic<std::uint64_t>, kWords> words{};
  };
  bool read(std::uint64_t index, FrameMetric& out) const noexcept;

  std::array<Slot, kCapacity> slots_;
  std::atomic<std::uint64_t> head_{0};
};

struct SessionConfig {
  Strategy mode = Strategy::Shared;
  std::uint32_t split_layer = 0;
  CodecId codec = CodecId::U8Quant;
  std::string source = "synthetic";
  std::optional<LinkModel> link;  // set when the session runs over a simulated link

  bool operator==(const SessionConfig&) const = default;
};

// A partial update as posted by a user; absent fields keep their value.
struct ConfigRequest {
  std::optional<std::string> split_layer;
  std::optional<std::string> codec;
  std::optional<std::string> mode;
};

// Rejected configuration; carries the field name and its accepted values.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message, std::vector<std::string> valid)
      : Error(message), field_(std::move(field)), valid_(std::move(valid)) {}
  const std::string& field() const noexcept { return field_; }
  const std::vector<std::string>& valid_values() const noexcept { return valid_; }

 private:
  std::string field_;
  std::vector<std::string> valid_;
};

enum class ConnectionState { Connecting, Connected, Reconnecting, Stopped };
std::string_view connection_state_name(ConnectionState s);

// Where frames come from: a synthetic stream or the PGM/PPM files of a directory.
class InputSource {
 public:
  static InputSource synthetic(SyntheticSource source);
  static InputSource directory(const std::filesystem::path& dir, const Shape& input_shape);

  Tensor next();
  const std::string& description() const noexcept { return description_; }

 private:
  std::optional<SyntheticSource> synthetic_;
  std::vector<Tensor> images_;
  std::uint64_t cursor_ = 0;
  std::string description_;
};

struct SessionOptions {
  SessionConfig initial;
  // Opens a fresh channel to the server; called on start and after failures.
  std::function<std::unique_ptr<Channel>()> connect;
  ClientOptions client;
  std::chrono::milliseconds reconnect_delay{200};
  std::chrono::milliseconds frame_interval{0};  // minimum spacing between frame starts
  std::optional<std::uint64_t> max_frames;     // stop after this many metrics
};

// Frame loop of the live demo. Config changes are queued and applied only between
// frames; frame ids start at 1 and never skip.
class Session {
 public:
  Session(const ModelGraph& model, InputSource source, SessionOptions options);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  void start();
  void stop();
  // Blocks until stop() or max_frames.
  void run();

  // Resolves a request against the current config; throws ConfigError.
  SessionConfig resolve(const ConfigRequest& request) const;
  // Queues a validated config and waits until the loop applied it. Returns
  // false on timeout (the change stays queued).
  bool apply(const SessionConfig& config, std::chrono::milliseconds timeout = std::chrono::seconds(5));

  SessionConfig config() const;
  ConnectionState state() const noexcept { return state_.load(); }
  std::uint32_t last_frame_id() const noexcept { return last_frame_id_.load(); }
  std::uint64_t reconnects() const noexcept { return reconnects_.load(); }
  const MetricRing& metrics() const noexcept { return metrics_; }
  const ModelGraph& model() const noexcept { return model_; }
  bool stopping() const noexcept { return stopping_.load(); }

  // Waits until a metric newer than frame_id exists, stop() is called, or the
  // timeout passes. Returns the latest frame id.
  std::uint32_t wait_for_frame_after(std::uint32_t frame_id, std::chrono::milliseconds timeout) const;

 private:
  struct Pending {
    SessionConfig config;
    std::shared_ptr<std::promise<void>> done;
  };

  void loop();
  void apply_pending();
  bool ensure_connected();
  FrameMetric process(const Tensor& input, const SessionConfig& cfg, std::uint32_t frame_id);
  void drop_connection();

  const ModelGraph& model_;
  InputSource source_;
  SessionOptions options_;

  mutable std::mutex config_mutex_;
  SessionConfig config_;
  std::deque<Pending> pending_;

  std::unique_ptr<Client> client_;
  std::atomic<ConnectionState> state_{ConnectionState::Connecting};
  std::atomic<std::uint32_t> last_frame_id_{0};
  std::atomic<std::uint64_t> reconnects_{0};
  std::atomic<bool> stopping_{false};
  std::atomic<bool> running_{false};
  MetricRing metrics_;

  mutable std::mutex wake_mutex_;
  mutable std::condition_variable wake_;
  std::thread thread_;
};

}  // namespace splitwire
