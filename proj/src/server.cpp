#include "splitwire/server.hpp"

#include <algorithm>
#include <numeric>

#include <sys/socket.h>

#include <spdlog/spdlog.h>

#include "splitwire/codec.hpp"
#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"

namespace splitwire {

std::vector<ScoredClass> top_k_scores(std::span<const float> scores, std::size_t k) {
  std::vector<std::uint32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  k = std::min({k, scores.size(), std::size_t{0xFFFF}});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::uint32_t a, std::uint32_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
  std::vector<ScoredClass> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({static_cast<std::uint16_t>(idx[i]), scores[idx[i]]});
  return out;
}

ResultFrame serve_frame(const ModelGraph& model, const TensorFrame& frame, std::uint8_t top_k) {
  const auto start = std::chrono::steady_clock::now();
  Tensor boundary = frame_tensor(frame);
  Tensor output;
  if (frame.split_layer == kRawInputSplit)
    output = std::move(forward(model, boundary).back());
  else
    output = forward_range(model, boundary, std::uint32_t{frame.split_layer} + 1, model.last());
  ResultFrame r;
  r.frame_id = frame.frame_id;
  r.top_k = top_k_scores(output.values(), top_k);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count();
  r.server_compute_us = static_cast<std::uint32_t>(std::min<long long>(us, 0xFFFFFFFFll));
  return r;
}

ServerSession::ServerSession(const ModelGraph& model, ServerOptions options) : model_(&model), options_(options) {}

void ServerSession::reply_error(ErrorCode code, const std::string& message, bool close, std::vector<Bytes>& out) {
  out.push_back(encode_message(ErrorMessage{static_cast<std::uint8_t>(code), message}));
  ++stats_.errors_sent;
  if (close) state_ = State::Closed;
}

std::vector<Bytes> ServerSession::feed(ByteView bytes) {
  std::vector<Bytes> out;
  if (closed()) return out;
  reader_.append(bytes);
  while (!closed()) {
    std::optional<Bytes> raw;
    try {
      raw = reader_.next();
    } catch (const FormatError& e) {
      const auto code = e.kind() == FormatError::Kind::VersionMismatch || e.kind() == FormatError::Kind::UnknownMessageType
                            ? ErrorCode::Unsupported
                            : ErrorCode::Corrupt;
      reply_error(code, e.what(), true, out);
      break;
    }
    if (!raw) break;

    Message msg;
    try {
      msg = decode_message(*raw);
    } catch (const FormatError& e) {
      // Framing held, so the stream is still aligned; only CRC damage is fatal.
      const bool fatal = e.kind() == FormatError::Kind::BadCrc || e.kind() == FormatError::Kind::UnknownCodec;
      reply_error(fatal ? ErrorCode::Corrupt : ErrorCode::BadFrame, e.what(), fatal, out);
      continue;
    }
    handle(msg, out);
  }
  return out;
}

void ServerSession::handle(const Message& msg, std::vector<Bytes>& out) {
  if (state_ == State::AwaitHello) {
    const auto* hello = std::get_if<Hello>(&msg);
    if (!hello) return reply_error(ErrorCode::ProtocolViolation, "expected Hello", true, out);
    if (hello->protocol_version != kProtocolVersion)
      return reply_error(ErrorCode::Unsupported, "unsupported protocol version " + std::to_string(hello->protocol_version),
                         true, out);
    if (hello->model_hash != model_->hash())
      return reply_error(ErrorCode::HashMismatch, "model hash mismatch", true, out);
    out.push_back(encode_message(HelloAck{kProtocolVersion, model_->hash()}));
    state_ = State::Ready;
    return;
  }

  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TensorFrame>) {
          handle_frame(m, out);
        } else if constexpr (std::is_same_v<M, ConfigUpdate>) {
          if (m.split_layer != kRawInputSplit && !model_->is_valid_split(m.split_layer))
            reply_error(ErrorCode::InvalidSplit, "invalid split point " + std::to_string(m.split_layer), false, out);
        } else {
          reply_error(ErrorCode::ProtocolViolation, "unexpected message type", true, out);
        }
      },
      msg);
}

void ServerSession::handle_frame(const TensorFrame& frame, std::vector<Bytes>& out) {
  if (frame.split_layer != kRawInputSplit && !model_->is_valid_split(frame.split_layer))
    return reply_error(ErrorCode::InvalidSplit, "invalid split point " + std::to_string(frame.split_layer), false, out);
  const Shape& expected =
      frame.split_layer == kRawInputSplit ? model_->input_shape() : model_->output_shape(frame.split_layer);
  if (frame.shape != expected)
    return reply_error(ErrorCode::BadFrame,
                       "frame shape " + to_string(frame.shape) + " does not match expected " + to_string(expected), false,
                       out);
  try {
    out.push_back(encode_message(serve_frame(*model_, frame, options_.top_k)));
    ++stats_.frames_served;
  } catch (const Error& e) {
    reply_error(ErrorCode::BadFrame, e.what(), false, out);
  }
}

TcpServer::TcpServer(const ModelGraph& model, const net::Address& listen, ServerOptions options)
    : model_(model), options_(options), listener_(net::listen_tcp(listen)) {
  port_ = net::local_port(listener_);
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::run() {
  while (!stopping_.load()) {
    auto socket = net::accept_tcp(listener_, std::chrono::milliseconds(100));
    if (!socket.valid()) continue;
    ++accepted_;
    std::lock_guard lock(mutex_);
    live_fds_.push_back(socket.fd());
    workers_.emplace_back([this, s = std::move(socket)]() mutable { handle_connection(std::move(s)); });
  }
}

void TcpServer::start() {
  accept_thread_ = std::thread([this] { run(); });
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mutex_);
    for (int fd : live_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void TcpServer::handle_connection(net::Socket socket) {
  ServerSession session(model_, options_);
  try {
    while (!stopping_.load() && !session.closed()) {
      Bytes chunk;
      try {
        chunk = socket.receive_some(std::chrono::milliseconds(200));
      } catch (const TimeoutError&) {
        continue;
      }
      if (chunk.empty()) break;
      for (const auto& reply : session.feed(chunk)) socket.send_all(reply);
    }
  } catch (const std::exception& e) {
    spdlog::debug("connection ended: {}", e.what());
  }
  {
    std::lock_guard lock(mutex_);
    live_fds_.erase(std::remove(live_fds_.begin(), live_fds_.end(), socket.fd()), live_fds_.end());
  }
  spdlog::debug("session closed: {} frames, {} errors", session.stats().frames_served, session.stats().errors_sent);
}

}  // namespace splitwire
