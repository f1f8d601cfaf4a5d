#include "splitwire/link.hpp"

#include <cmath>

#include "splitwire/errors.hpp"

namespace splitwire {

void LinkModel::validate() const {
  if (!(rate_bytes_per_s > 0.0)) throw Error("link rate must be positive");
  if (!(one_way_delay_s >= 0.0) || !std::isfinite(one_way_delay_s)) throw Error("link delay must be >= 0");
}

SimLink::SimLink(LinkModel model) : model_(model) { model_.validate(); }

SimLink::Delivery SimLink::transmit(double now, std::size_t bytes) {
  Delivery d;
  d.start = std::max(now, busy_until_);
  d.send_complete = d.start + static_cast<double>(bytes) / model_.rate_bytes_per_s;
  d.arrival = d.send_complete + model_.one_way_delay_s;
  busy_until_ = d.send_complete;
  return d;
}

void EventLoop::schedule(double at, std::function<void()> action) {
  if (at < now_) at = now_;
  queue_.push({at, seq_++, std::move(action)});
}

void EventLoop::run() {
  while (!queue_.empty()) {
    // priority_queue::top is const; the action is moved out via a copy of the node.
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.at;
    ev.action();
  }
}

void SimulatedLinkPair::Endpoint::send(Bytes message) {
  const auto d = out_.transmit(loop_->now(), message.size());
  Endpoint* peer = peer_;
  loop_->schedule(d.arrival, [peer, msg = std::move(message)]() mutable {
    if (peer->receiver_) peer->receiver_(std::move(msg));
  });
}

SimulatedLinkPair::SimulatedLinkPair(EventLoop& loop, LinkModel uplink, LinkModel downlink)
    : client_(loop, uplink), server_(loop, downlink) {
  client_.peer_ = &server_;
  server_.peer_ = &client_;
}

}  // namespace splitwire
