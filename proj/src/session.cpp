#include "splitwire/session.hpp"

#include <algorithm>
#include <cstring>
#include <type_traits>

#include <spdlog/spdlog.h>

#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/image_io.hpp"

namespace splitwire {

static_assert(std::is_trivially_copyable_v<FrameMetric>);

void MetricRing::push(const FrameMetric& metric) noexcept {
  const std::uint64_t index = head_.load(std::memory_order_relaxed);
  Slot& slot = slots_[index % kCapacity];
  std::array<std::uint64_t, kWords> raw{};
  std::memcpy(raw.data(), &metric, sizeof metric);
  slot.seq.store(2 * index + 1, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_release);
  for (std::size_t w = 0; w < kWords; ++w) slot.words[w].store(raw[w], std::memory_order_relaxed);
  slot.seq.store(2 * index + 2, std::memory_order_release);
  head_.store(index + 1, std::memory_order_release);
}

bool MetricRing::read(std::uint64_t index, FrameMetric& out) const noexcept {
  const Slot& slot = slots_[index % kCapacity];
  const std::uint64_t before = slot.seq.load(std::memory_order_acquire);
  if (before != 2 * index + 2) return false;
  std::array<std::uint64_t, kWords> raw{};
  for (std::size_t w = 0; w < kWords; ++w) raw[w] = slot.words[w].load(std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_acquire);
  if (slot.seq.load(std::memory_order_relaxed) != before) return false;
  std::memcpy(static_cast<void*>(&out), raw.data(), sizeof out);
  return true;
}

std::vector<FrameMetric> MetricRing::since(std::uint32_t frame_id) const {
  const std::uint64_t head = head_.load(std::memory_order_acquire);
  const std::uint64_t first = head > kCapacity ? head - kCapacity : 0;
  std::vector<FrameMetric> out;
  FrameMetric m;
  for (std::uint64_t i = first; i < head; ++i)
    if (read(i, m) && m.frame_id > frame_id) out.push_back(m);
  return out;
}

std::size_t MetricRing::size() const noexcept {
  return static_cast<std::size_t>(std::min<std::uint64_t>(total_pushed(), kCapacity));
}

std::string_view connection_state_name(ConnectionState s) {
  switch (s) {
    case ConnectionState::Connecting: return "connecting";
    case ConnectionState::Connected: return "connected";
    case ConnectionState::Reconnecting: return "reconnecting";
    case ConnectionState::Stopped: return "stopped";
  }
  return "?";
}

InputSource InputSource::synthetic(SyntheticSource source) {
  InputSource in;
  in.description_ = "synthetic";
  in.synthetic_ = std::move(source);
  return in;
}

InputSource InputSource::directory(const std::filesystem::path& dir, const Shape& input_shape) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  std::filesystem::directory_iterator it(dir, ec);
  if (ec) throw Error("cannot read image directory " + dir.string() + ": " + ec.message());
  for (const auto& entry : it) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(entry.path());
  }
  if (files.empty()) throw Error("no .pgm/.ppm images in " + dir.string());
  std::sort(files.begin(), files.end());
  InputSource in;
  in.description_ = "directory:" + dir.string();
  for (const auto& f : files) in.images_.push_back(fit_to_input(read_pnm(f), input_shape));
  return in;
}

Tensor InputSource::next() {
  const auto i = cursor_++;
  if (synthetic_) return generate_input(*synthetic_, static_cast<std::uint32_t>(i % synthetic_->count)).image;
  return images_[i % images_.size()];
}

Session::Session(const ModelGraph& model, InputSource source, SessionOptions options)
    : model_(model), source_(std::move(source)), options_(std::move(options)), config_(options_.initial) {
  config_.source = source_.description();
  if (!model_.is_valid_split(config_.split_layer))
    throw InvalidSplitError("invalid split point " + std::to_string(config_.split_layer));
  if (config_.mode != Strategy::MobileOnly && !options_.connect)
    throw Error("a server connection is required for mode " + std::string(strategy_name(config_.mode)));
}

Session::~Session() { stop(); }

void Session::start() {
  if (thread_.joinable()) return;
  running_ = true;
  thread_ = std::thread([this] { loop(); });
}

void Session::stop() {
  stopping_ = true;
  wake_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Session::run() {
  start();
  thread_.join();
}

SessionConfig Session::config() const {
  std::lock_guard lock(config_mutex_);
  return config_;
}

SessionConfig Session::resolve(const ConfigRequest& request) const {
  SessionConfig cfg = config();
  if (request.mode) {
    const auto mode = parse_strategy(*request.mode);
    if (!mode)
      throw ConfigError("mode", "unknown mode '" + *request.mode + "'", {"mobile_only", "cloud_only", "shared"});
    if (*mode != Strategy::MobileOnly && !options_.connect)
      throw ConfigError("mode", "no server configured for mode '" + *request.mode + "'", {"mobile_only"});
    cfg.mode = *mode;
  }
  if (request.codec) {
    const auto codec = parse_codec(*request.codec);
    if (!codec) throw ConfigError("codec", "unknown codec '" + *request.codec + "'", {"f32", "u8", "u8h"});
    cfg.codec = *codec;
  }
  if (request.split_layer) {
    const auto id = model_.find_layer(*request.split_layer);
    if (!id || !model_.is_valid_split(*id))
      throw ConfigError("split_layer", "invalid split point '" + *request.split_layer + "'",
                        model_.valid_split_names());
    cfg.split_layer = *id;
  }
  return cfg;
}

bool Session::apply(const SessionConfig& config, std::chrono::milliseconds timeout) {
  auto done = std::make_shared<std::promise<void>>();
  auto future = done->get_future();
  {
    std::lock_guard lock(config_mutex_);
    if (!running_) {
      config_ = config;
      return true;
    }
    pending_.push_back({config, std::move(done)});
  }
  wake_.notify_all();
  return future.wait_for(timeout) == std::future_status::ready;
}

void Session::apply_pending() {
  std::deque<Pending> batch;
  SessionConfig cfg;
  {
    std::lock_guard lock(config_mutex_);
    if (pending_.empty()) return;
    batch.swap(pending_);
    config_ = batch.back().config;
    cfg = config_;
  }
  if (client_ && cfg.mode != Strategy::MobileOnly) {
    try {
      const bool cloud = cfg.mode == Strategy::CloudOnly;
      client_->send_config(cloud ? std::nullopt : std::optional<std::uint32_t>(cfg.split_layer),
                           cloud ? CodecId::Float32Raw : cfg.codec);
    } catch (const std::exception& e) {
      spdlog::warn("config update not delivered: {}", e.what());
      drop_connection();
    }
  }
  for (auto& p : batch) p.done->set_value();
}

void Session::drop_connection() {
  if (client_) {
    try {
      client_->channel().close();
    } catch (const std::exception&) {
    }
  }
  client_.reset();
  if (state_ == ConnectionState::Connected) ++reconnects_;
  state_ = ConnectionState::Reconnecting;
}

bool Session::ensure_connected() {
  if (client_) return true;
  try {
    auto client = std::make_unique<Client>(model_, options_.connect(), options_.client);
    client->handshake();
    client_ = std::move(client);
    state_ = ConnectionState::Connected;
    spdlog::info("session connected to server");
    return true;
  } catch (const std::exception& e) {
    spdlog::warn("server unavailable: {}", e.what());
    if (state_ != ConnectionState::Connecting) state_ = ConnectionState::Reconnecting;
    return false;
  }
}

FrameMetric Session::process(const Tensor& input, const SessionConfig& cfg, std::uint32_t frame_id) {
  using Clock = std::chrono::steady_clock;
  FrameMetric m;
  m.frame_id = frame_id;
  m.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  m.mode = cfg.mode;
  if (cfg.mode == Strategy::MobileOnly) {
    const auto t0 = Clock::now();
    const Tensor out = std::move(forward(model_, input).back());
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    const auto top = argmax(out.values());
    m.t_head_ms = m.t_total_ms = s * 1000.0;
    m.top1_class = static_cast<std::uint16_t>(top);
    m.top1_score = out[top];
    m.server_connected = client_ != nullptr;
    return m;
  }
  client_->set_next_frame_id(frame_id);
  const bool shared = cfg.mode == Strategy::Shared;
  if (shared) {
    m.split_layer = cfg.split_layer;
    m.codec = cfg.codec;
  }
  const auto r = client_->infer(input, shared ? std::optional<std::uint32_t>(cfg.split_layer) : std::nullopt,
                                m.codec);
  m.t_head_ms = r.timing.head_s * 1000.0;
  m.t_server_ms = r.result.server_compute_us / 1000.0;
  m.t_total_ms = r.timing.total_s * 1000.0;
  // The server can only start once the upload is complete, so a send() that
  // returns late (the server ran first on a busy CPU) is capped at the time left.
  const double network_ms = m.t_total_ms - m.t_head_ms - r.timing.encode_s * 1000.0 - m.t_server_ms;
  m.t_upload_ms = std::clamp(r.timing.upload_s * 1000.0, 0.0, std::max(0.0, network_ms));
  m.upload_bytes = r.timing.upload_bytes;
  if (!r.result.top_k.empty()) {
    m.top1_class = r.result.top_k.front().class_id;
    m.top1_score = r.result.top_k.front().score;
  }
  m.server_connected = true;
  return m;
}

void Session::loop() {
  std::optional<Tensor> input;
  auto next_start = std::chrono::steady_clock::now();
  while (!stopping_) {
    apply_pending();
    if (options_.max_frames && last_frame_id_ >= *options_.max_frames) break;
    const SessionConfig cfg = config();
    if (cfg.mode != Strategy::MobileOnly && !ensure_connected()) {
      std::unique_lock lock(wake_mutex_);
      wake_.wait_for(lock, options_.reconnect_delay, [&] { return stopping_.load(); });
      continue;
    }
    if (options_.frame_interval.count() > 0) {
      std::unique_lock lock(wake_mutex_);
      wake_.wait_until(lock, next_start, [&] { return stopping_.load(); });
      if (stopping_) break;
      next_start = std::max(next_start + options_.frame_interval, std::chrono::steady_clock::now());
    }
    // A frame that failed on the network is retried with the same input and id.
    if (!input) input = source_.next();
    const std::uint32_t id = last_frame_id_ + 1;
    FrameMetric metric;
    try {
      metric = process(*input, cfg, id);
    } catch (const TransportError& e) {
      spdlog::warn("frame {} failed: {}; reconnecting", id, e.what());
      drop_connection();
      continue;
    } catch (const std::exception& e) {
      spdlog::error("frame {} failed: {}", id, e.what());
      drop_connection();
      std::unique_lock lock(wake_mutex_);
      wake_.wait_for(lock, options_.reconnect_delay, [&] { return stopping_.load(); });
      continue;
    }
    input.reset();
    metrics_.push(metric);
    last_frame_id_ = id;
    wake_.notify_all();
  }
  {
    std::lock_guard lock(config_mutex_);
    running_ = false;
  }
  apply_pending();
  if (client_) client_->channel().close();
  client_.reset();
  state_ = ConnectionState::Stopped;
  wake_.notify_all();
}

std::uint32_t Session::wait_for_frame_after(std::uint32_t frame_id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(wake_mutex_);
  wake_.wait_for(lock, timeout, [&] {
    return last_frame_id_.load() > frame_id || stopping_.load() || state_.load() == ConnectionState::Stopped;
  });
  return last_frame_id_.load();
}

}  // namespace splitwire
