#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "splitwire/analyzer.hpp"
#include "splitwire/session.hpp"

namespace httplib {
class Server;
}

namespace splitwire {

struct ControlOptions {
  std::string listen = "127.0.0.1:8080";     // port 0 picks a free port
  std::optional<std::filesystem::path> static_dir;  // served at / when set
  SyntheticSource calibration{1, 64, {3, 32, 32}};  // for GET /splits
};

// JSON field names shared with the dashboard.
nlohmann::json metric_to_json(const FrameMetric& metric, const ModelGraph& model);
nlohmann::json config_to_json(const SessionConfig& config, const ModelGraph& model);
nlohmann::json profile_to_json(const LayerProfile& profile);
// Accepts {"split_layer", "codec", "mode"}, each optional; throws ConfigError on
// wrong field types.
ConfigRequest config_request_from_json(const nlohmann::json& body);

// HTTP/1.1 control API for a running Session:
//   GET  /status            config + connection state
//   GET  /splits            split profiles (?format=csv for the analyzer CSV)
//   POST /config            JSON partial config, applied at the next frame boundary
//   GET  /metrics?since=ID  frame metrics with frame_id > ID
//   GET  /events            server-sent events, one FrameMetric per event
class ControlServer {
 public:
  ControlServer(Session& session, ControlOptions options);
  ~ControlServer();
  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  // Binds and serves on a background thread; throws if the address is unusable.
  void start();
  void stop();
  std::uint16_t port() const noexcept { return port_; }

 private:
  void routes();
  const ProfileReport& profiles();

  Session& session_;
  ControlOptions options_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex profile_mutex_;
  std::optional<ProfileReport> profiles_;
};

}  // namespace splitwire
