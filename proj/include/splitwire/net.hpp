#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "splitwire/bytes.hpp"

namespace splitwire::net {

struct Address {
  std::string host;
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

// "host:port"; host may be empty (meaning 0.0.0.0 for listeners).
Address parse_address(const std::string& text);

// Move-only owner of a socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close() noexcept;
  // Half-closes both directions, unblocking any reader on another thread.
  void shutdown() noexcept;

  void send_all(ByteView bytes) const;
  // Reads whatever is available, waiting up to `timeout`. Empty result means the
  // peer closed the connection; TimeoutError when nothing arrived in time.
  Bytes receive_some(std::chrono::milliseconds timeout, std::size_t max_bytes = 64 * 1024) const;

 private:
  int fd_ = -1;
};

Socket listen_tcp(const Address& address, int backlog = 16);
std::uint16_t local_port(const Socket& socket);
// Waits up to `timeout` for a connection; returns an invalid socket on timeout.
Socket accept_tcp(const Socket& listener, std::chrono::milliseconds timeout);
Socket connect_tcp(const Address& address, std::chrono::milliseconds timeout);

// Connected AF_UNIX stream pair, for in-process links.
std::pair<Socket, Socket> socket_pair();

}  // namespace splitwire::net
