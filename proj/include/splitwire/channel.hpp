#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>

#include "splitwire/bytes.hpp"
#include "splitwire/graph.hpp"
#include "splitwire/link.hpp"
#include "splitwire/net.hpp"
#include "splitwire/server.hpp"
#include "splitwire/wire.hpp"

namespace splitwire {

// Message-oriented client connection. One thread may send while another
// receives; neither direction is shared between threads.
class Channel {
 public:
  virtual ~Channel() = default;

  virtual void send(ByteView message) = 0;
  // Next complete message. Throws TimeoutError, or TransportError once closed.
  virtual Bytes receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

// Stream socket (TCP or AF_UNIX) carrying framed messages.
class SocketChannel : public Channel {
 public:
  explicit SocketChannel(net::Socket socket) : socket_(std::move(socket)) {}

  static std::unique_ptr<SocketChannel> connect(const net::Address& address,
                                                std::chrono::milliseconds timeout = std::chrono::seconds(10));

  void send(ByteView message) override;
  Bytes receive(std::chrono::milliseconds timeout) override;
  void close() override { socket_.shutdown(); }

 private:
  net::Socket socket_;
  MessageReader reader_;
};

// In-process server backed by a ServerSession; requests are served on receive().
class LoopbackChannel : public Channel {
 public:
  explicit LoopbackChannel(const ModelGraph& server_model, ServerOptions options = {});

  void send(ByteView message) override;
  Bytes receive(std::chrono::milliseconds timeout) override;
  void close() override;

  const ServerSession& session() const noexcept { return session_; }

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  ServerSession session_;
  std::deque<Bytes> inbox_;
  std::deque<Bytes> replies_;
  bool closed_ = false;
};

// Rate-limits and delays outgoing traffic of another channel in real time.
// Each message occupies the link for bytes/rate after the previous one finished
// (or after it was written, if the link was idle), then is released to the inner
// channel one_way_delay later by a background thread.
class ThrottledChannel : public Channel {
 public:
  ThrottledChannel(std::unique_ptr<Channel> inner, LinkModel link);
  ~ThrottledChannel() override;

  void send(ByteView message) override;
  Bytes receive(std::chrono::milliseconds timeout) override { return inner_->receive(timeout); }
  void close() override;

  // Blocks until every queued message has been handed to the inner channel.
  void flush();

 private:
  using Clock = std::chrono::steady_clock;
  struct Pending {
    Clock::time_point release;
    Bytes message;
  };

  void pump();

  std::unique_ptr<Channel> inner_;
  LinkModel link_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Pending> queue_;
  Clock::time_point busy_until_{};
  bool stopping_ = false;
  bool in_flight_ = false;
  std::exception_ptr error_;
  std::thread thread_;
};

struct ChannelPair {
  std::unique_ptr<Channel> client;
  std::unique_ptr<Channel> server;
};

// Real-time throttled link between two in-process endpoints (AF_UNIX pair).
ChannelPair make_throttled_pair(LinkModel uplink, LinkModel downlink);

}  // namespace splitwire
