#include "splitwire/channel.hpp"

#include "splitwire/errors.hpp"

namespace splitwire {

std::unique_ptr<SocketChannel> SocketChannel::connect(const net::Address& address, std::chrono::milliseconds timeout) {
  return std::make_unique<SocketChannel>(net::connect_tcp(address, timeout));
}

void SocketChannel::send(ByteView message) { socket_.send_all(message); }

Bytes SocketChannel::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto msg = reader_.next()) return std::move(*msg);
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TimeoutError("timed out waiting for a message");
    auto chunk = socket_.receive_some(left);
    if (chunk.empty()) throw TransportError("connection closed by peer");
    reader_.append(chunk);
  }
}

LoopbackChannel::LoopbackChannel(const ModelGraph& server_model, ServerOptions options)
    : session_(server_model, options) {}

void LoopbackChannel::send(ByteView message) {
  std::lock_guard lock(mutex_);
  if (closed_ || session_.closed()) throw TransportError("connection closed by peer");
  // Served lazily in receive() so server compute counts as round-trip time.
  inbox_.emplace_back(message.begin(), message.end());
  ready_.notify_all();
}

Bytes LoopbackChannel::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  auto serve_pending = [&] {
    while (replies_.empty() && !inbox_.empty() && !session_.closed()) {
      for (auto& reply : session_.feed(inbox_.front())) replies_.push_back(std::move(reply));
      inbox_.pop_front();
    }
    return !replies_.empty() || closed_ || session_.closed();
  };
  if (!ready_.wait_for(lock, timeout, serve_pending)) throw TimeoutError("timed out waiting for a message");
  if (replies_.empty()) throw TransportError("connection closed by peer");
  Bytes msg = std::move(replies_.front());
  replies_.pop_front();
  return msg;
}

void LoopbackChannel::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  ready_.notify_all();
}

ThrottledChannel::ThrottledChannel(std::unique_ptr<Channel> inner, LinkModel link)
    : inner_(std::move(inner)), link_(link) {
  link_.validate();
  thread_ = std::thread([this] { pump(); });
}

ThrottledChannel::~ThrottledChannel() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void ThrottledChannel::send(ByteView message) {
  std::lock_guard lock(mutex_);
  if (error_) std::rethrow_exception(error_);
  if (stopping_) throw TransportError("channel closed");
  const auto now = Clock::now();
  const auto start = std::max(now, busy_until_);
  const auto serialize = std::chrono::duration<double>(static_cast<double>(message.size()) / link_.rate_bytes_per_s);
  busy_until_ = start + std::chrono::duration_cast<Clock::duration>(serialize);
  const auto release =
      busy_until_ + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(link_.one_way_delay_s));
  queue_.push_back({release, Bytes(message.begin(), message.end())});
  cv_.notify_all();
}

void ThrottledChannel::flush() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return (queue_.empty() && !in_flight_) || stopping_ || error_; });
  if (error_) std::rethrow_exception(error_);
}

void ThrottledChannel::close() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  inner_->close();
}

void ThrottledChannel::pump() {
  std::unique_lock lock(mutex_);
  for (;;) {
    cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
    if (stopping_) return;
    const auto release = queue_.front().release;
    if (cv_.wait_until(lock, release, [&] { return stopping_; })) return;
    Pending p = std::move(queue_.front());
    queue_.pop_front();
    in_flight_ = true;
    lock.unlock();
    try {
      inner_->send(p.message);
    } catch (...) {
      lock.lock();
      error_ = std::current_exception();
      in_flight_ = false;
      cv_.notify_all();
      return;
    }
    lock.lock();
    in_flight_ = false;
    cv_.notify_all();
  }
}

ChannelPair make_throttled_pair(LinkModel uplink, LinkModel downlink) {
  auto [a, b] = net::socket_pair();
  ChannelPair pair;
  pair.client = std::make_unique<ThrottledChannel>(std::make_unique<SocketChannel>(std::move(a)), uplink);
  pair.server = std::make_unique<ThrottledChannel>(std::make_unique<SocketChannel>(std::move(b)), downlink);
  return pair;
}

}  // namespace splitwire
