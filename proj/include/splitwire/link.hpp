#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "splitwire/bytes.hpp"

namespace splitwire {

inline constexpr double kDefaultRateBytesPerSecond = 3e6;  // 3 MB/s
inline constexpr double kDefaultRttSeconds = 0.005;

// One direction of a link: FIFO serialization at `rate` followed by a fixed
// propagation delay.
struct LinkModel {
  double rate_bytes_per_s = kDefaultRateBytesPerSecond;
  double one_way_delay_s = kDefaultRttSeconds / 2;

  static LinkModel from_rtt(double rate_bytes_per_s, double rtt_s) { return {rate_bytes_per_s, rtt_s / 2}; }
  void validate() const;

  bool operator==(const LinkModel&) const = default;
};

// Virtual-time model of a single link direction. A transmission starts when the
// link is free, occupies it for bytes/rate, and its last byte arrives
// one_way_delay later.
class SimLink {
 public:
  struct Delivery {
    double start = 0.0;
    double send_complete = 0.0;
    double arrival = 0.0;
  };

  explicit SimLink(LinkModel model);

  Delivery transmit(double now, std::size_t bytes);
  double busy_until() const noexcept { return busy_until_; }
  const LinkModel& model() const noexcept { return model_; }

 private:
  LinkModel model_;
  double busy_until_ = 0.0;
};

// Single-threaded discrete-event scheduler. Events at equal times run in the
// order they were scheduled.
class EventLoop {
 public:
  double now() const noexcept { return now_; }
  void schedule(double at, std::function<void()> action);
  void schedule_after(double delay, std::function<void()> action) { schedule(now_ + delay, std::move(action)); }
  // Runs until no events remain.
  void run();
  bool empty() const noexcept { return queue_.empty(); }

 private:
  struct Event {
    double at;
    std::uint64_t seq;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const { return a.at != b.at ? a.at > b.at : a.seq > b.seq; }
  };

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  double now_ = 0.0;
  std::uint64_t seq_ = 0;
};

// Two endpoints joined by simulated links (uplink: client -> server).
class SimulatedLinkPair {
 public:
  using Receiver = std::function<void(Bytes)>;

  class Endpoint {
   public:
    void send(Bytes message);
    void on_receive(Receiver receiver) { receiver_ = std::move(receiver); }

   private:
    friend class SimulatedLinkPair;
    Endpoint(EventLoop& loop, LinkModel out) : loop_(&loop), out_(out) {}

    EventLoop* loop_;
    SimLink out_;
    Endpoint* peer_ = nullptr;
    Receiver receiver_;
  };

  SimulatedLinkPair(EventLoop& loop, LinkModel uplink, LinkModel downlink);
  SimulatedLinkPair(const SimulatedLinkPair&) = delete;
  SimulatedLinkPair& operator=(const SimulatedLinkPair&) = delete;

  Endpoint& client() noexcept { return client_; }
  Endpoint& server() noexcept { return server_; }

 private:
  Endpoint client_;
  Endpoint server_;
};

}  // namespace splitwire
