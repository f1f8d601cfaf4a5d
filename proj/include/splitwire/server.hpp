#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "splitwire/graph.hpp"
#include "splitwire/net.hpp"
#include "splitwire/wire.hpp"

namespace splitwire {

struct ServerOptions {
  std::uint8_t top_k = 5;
};

// Protocol state machine for one connection, independent of any transport.
// Frames are handled strictly in arrival order. After a fatal error the session
// replies with an Error message and closes; later input is ignored.
class ServerSession {
 public:
  struct Stats {
    std::uint64_t frames_served = 0;
    std::uint64_t errors_sent = 0;
  };

  explicit ServerSession(const ModelGraph& model, ServerOptions options = {});

  // Consumes received bytes and returns the encoded replies, in order.
  std::vector<Bytes> feed(ByteView bytes);

  bool closed() const noexcept { return state_ == State::Closed; }
  bool handshaken() const noexcept { return state_ == State::Ready; }
  const Stats& stats() const noexcept { return stats_; }

 private:
  enum class State { AwaitHello, Ready, Closed };

  void handle(const Message& msg, std::vector<Bytes>& out);
  void handle_frame(const TensorFrame& frame, std::vector<Bytes>& out);
  void reply_error(ErrorCode code, const std::string& message, bool close, std::vector<Bytes>& out);

  const ModelGraph* model_;
  ServerOptions options_;
  MessageReader reader_;
  State state_ = State::AwaitHello;
  Stats stats_;
};

// Runs the tail sub-model for a received frame and ranks the classes.
ResultFrame serve_frame(const ModelGraph& model, const TensorFrame& frame, std::uint8_t top_k);

std::vector<ScoredClass> top_k_scores(std::span<const float> scores, std::size_t k);

// Thread-per-connection TCP server.
class TcpServer {
 public:
  TcpServer(const ModelGraph& model, const net::Address& listen, ServerOptions options = {});
  ~TcpServer();

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }

  // Blocks until stop() is called.
  void run();
  // Runs the accept loop on a background thread.
  void start();
  void stop();

  std::uint64_t connections_accepted() const noexcept { return accepted_.load(); }

 private:
  void handle_connection(net::Socket socket);

  const ModelGraph& model_;
  ServerOptions options_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> accepted_{0};
  std::thread accept_thread_;
  std::mutex mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> live_fds_;
};

}  // namespace splitwire
