#include "splitwire/control_api.hpp"

#include <cstdio>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "splitwire/errors.hpp"
#include "splitwire/net.hpp"

namespace splitwire {

using nlohmann::json;

namespace {

std::string split_label(const FrameMetric& m, const ModelGraph& model) {
  if (m.mode == Strategy::MobileOnly) return "none";
  if (m.mode == Strategy::CloudOnly) return "input";
  return m.split_layer < model.size() ? model.layer(m.split_layer).name : "?";
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

json metric_to_json(const FrameMetric& m, const ModelGraph& model) {
  return {
      {"frame_id", m.frame_id},
      {"timestamp_ms", m.timestamp_ms},
      {"mode", strategy_name(m.mode)},
      {"split_layer", split_label(m, model)},
      {"codec", m.mode == Strategy::MobileOnly ? std::string("none") : std::string(codec_name(m.codec))},
      {"t_head_ms", m.t_head_ms},
      {"t_upload_ms", m.t_upload_ms},
      {"t_server_ms", m.t_server_ms},
      {"t_total_ms", m.t_total_ms},
      {"upload_bytes", m.upload_bytes},
      {"top1_class", m.top1_class},
      {"top1_score", m.top1_score},
      {"server_connected", m.server_connected},
  };
}

json config_to_json(const SessionConfig& c, const ModelGraph& model) {
  json j = {
      {"mode", strategy_name(c.mode)},
      {"split_layer", model.layer(c.split_layer).name},
      {"codec", codec_name(c.codec)},
      {"source", c.source},
      {"link", nullptr},
  };
  if (c.link) j["link"] = {{"rate_bytes_per_s", c.link->rate_bytes_per_s}, {"rtt_ms", 2000.0 * c.link->one_way_delay_s}};
  return j;
}

json profile_to_json(const LayerProfile& p) {
  return {
      {"layer_id", p.layer_id},     {"layer_name", p.layer_name},     {"cum_flops", p.cumulative_flops},
      {"bytes_f32", p.bytes_f32},   {"bytes_u8", p.bytes_u8},         {"entropy_bits", p.entropy_bits},
      {"est_bytes", p.est_compressed_bytes}, {"stability", p.stability},
  };
}

ConfigRequest config_request_from_json(const json& body) {
  if (!body.is_object()) throw ConfigError("body", "config body must be a JSON object", {"split_layer", "codec", "mode"});
  ConfigRequest req;
  auto field = [&](const char* name, std::optional<std::string>& out) {
    if (!body.contains(name) || body[name].is_null()) return;
    if (!body[name].is_string()) throw ConfigError(name, std::string(name) + " must be a string", {});
    out = body[name].get<std::string>();
  };
  field("split_layer", req.split_layer);
  field("codec", req.codec);
  field("mode", req.mode);
  for (const auto& [key, value] : body.items())
    if (key != "split_layer" && key != "codec" && key != "mode")
      throw ConfigError(key, "unknown config field '" + key + "'", {"split_layer", "codec", "mode"});
  return req;
}

ControlServer::ControlServer(Session& session, ControlOptions options)
    : session_(session), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  routes();
}

ControlServer::~ControlServer() { stop(); }

const ProfileReport& ControlServer::profiles() {
  std::lock_guard lock(profile_mutex_);
  if (!profiles_) profiles_ = profile_splits(session_.model(), options_.calibration);
  return *profiles_;
}

void ControlServer::routes() {
  const ModelGraph& model = session_.model();

  http_->Get("/status", [this, &model](const httplib::Request&, httplib::Response& res) {
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(model.hash()));
    send_json(res, 200,
              {{"config", config_to_json(session_.config(), model)},
               {"connection", connection_state_name(session_.state())},
               {"last_frame_id", session_.last_frame_id()},
               {"reconnects", session_.reconnects()},
               {"model_hash", hash},
               {"valid_splits", model.valid_split_names()}});
  });

  http_->Get("/splits", [this](const httplib::Request& req, httplib::Response& res) {
    const auto& report = profiles();
    if (req.get_param_value("format") == "csv") {
      res.set_content(profiles_csv(report.profiles), "text/csv");
      return;
    }
    json splits = json::array();
    for (const auto& p : report.profiles) splits.push_back(profile_to_json(p));
    send_json(res, 200,
              {{"uncalibrated", report.uncalibrated},
               {"calibration", {{"seed", options_.calibration.seed}, {"count", options_.calibration.count}}},
               {"splits", splits}});
  });

  http_->Post("/config", [this, &model](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      return send_json(res, 400, {{"error", std::string("invalid JSON: ") + e.what()}});
    }
    try {
      const SessionConfig cfg = session_.resolve(config_request_from_json(body));
      const bool applied = session_.apply(cfg);
      send_json(res, applied ? 200 : 202, {{"applied", applied}, {"config", config_to_json(cfg, model)}});
    } catch (const ConfigError& e) {
      send_json(res, 400, {{"error", e.what()}, {"field", e.field()}, {"valid_values", e.valid_values()}});
    }
  });

  http_->Get("/metrics", [this, &model](const httplib::Request& req, httplib::Response& res) {
    std::uint32_t since = 0;
    if (req.has_param("since")) {
      const auto text = req.get_param_value("since");
      try {
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used != text.size() || v > 0xFFFFFFFFull) throw std::out_of_range("since");
        since = static_cast<std::uint32_t>(v);
      } catch (const std::exception&) {
        return send_json(res, 400, {{"error", "since must be a non-negative frame id"}, {"field", "since"}});
      }
    }
    json list = json::array();
    for (const auto& m : session_.metrics().since(since)) list.push_back(metric_to_json(m, model));
    send_json(res, 200, {{"metrics", list}});
  });

  http_->Get("/events", [this, &model](const httplib::Request& req, httplib::Response& res) {
    std::uint32_t start = session_.last_frame_id();
    const std::string resume = req.has_param("since") ? req.get_param_value("since") : req.get_header_value("Last-Event-ID");
    if (!resume.empty()) {
      try {
        start = static_cast<std::uint32_t>(std::stoul(resume));
      } catch (const std::exception&) {
      }
    }
    res.set_header("Cache-Control", "no-cache");
    auto last = std::make_shared<std::uint32_t>(start);
    res.set_chunked_content_provider("text/event-stream", [this, &model, last](std::size_t, httplib::DataSink& sink) {
      if (stopping_) {
        sink.done();
        return true;
      }
      session_.wait_for_frame_after(*last, std::chrono::milliseconds(250));
      const auto batch = session_.metrics().since(*last);
      std::string out;
      for (const auto& m : batch) {
        out += "id: " + std::to_string(m.frame_id) + "\ndata: " + metric_to_json(m, model).dump() + "\n\n";
        *last = m.frame_id;
      }
      if (out.empty()) out = ": keepalive\n\n";
      if (!sink.write(out.data(), out.size())) return false;
      if (session_.state() == ConnectionState::Stopped && batch.empty()) sink.done();
      return true;
    });
  });

  if (options_.static_dir && !http_->set_mount_point("/", options_.static_dir->string()))
    throw Error("cannot serve static files from " + options_.static_dir->string());
}

void ControlServer::start() {
  if (thread_.joinable()) return;
  const auto address = net::parse_address(options_.listen);
  if (address.port == 0) {
    const int port = http_->bind_to_any_port(address.host);
    if (port < 0) throw TransportError("cannot bind control API on " + address.host);
    port_ = static_cast<std::uint16_t>(port);
  } else {
    if (!http_->bind_to_port(address.host, address.port))
      throw TransportError("cannot bind control API on " + options_.listen);
    port_ = address.port;
  }
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  spdlog::info("control API listening on {}:{}", address.host, port_);
}

void ControlServer::stop() {
  stopping_ = true;
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace splitwire
