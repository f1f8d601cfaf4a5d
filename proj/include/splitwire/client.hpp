#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "splitwire/channel.hpp"
#include "splitwire/graph.hpp"
#include "splitwire/tensor.hpp"
#include "splitwire/wire.hpp"

namespace splitwire {

struct InferTiming {
  double head_s = 0.0;       // client forward through the split
  double encode_s = 0.0;     // quantize + entropy code + framing
  double upload_s = 0.0;     // time spent handing the frame to the channel
  double remainder_s = 0.0;  // from upload end until the result arrived
  double total_s = 0.0;
  std::size_t upload_bytes = 0;   // whole TensorFrame message
  std::size_t payload_bytes = 0;  // tensor payload only
};

struct InferResult {
  ResultFrame result;
  InferTiming timing;
};

struct ClientOptions {
  std::chrono::milliseconds timeout = std::chrono::seconds(10);
};

// A client session over one channel. Send and receive may be driven from two
// threads (pipelining), one thread per direction.
class Client {
 public:
  Client(const ModelGraph& model, std::unique_ptr<Channel> channel, ClientOptions options = {});

  // Hello / HelloAck exchange; throws RemoteError when the server refuses.
  void handshake();

  // Runs the head for `split` (nullopt = cloud-only: the raw input is uploaded),
  // uploads the feature tensor and waits for the server's result.
  InferResult infer(const Tensor& input, std::optional<std::uint32_t> split, CodecId codec);

  // Head + encode only; returns the encoded TensorFrame message.
  Bytes prepare(const Tensor& input, std::optional<std::uint32_t> split, CodecId codec, InferTiming* timing = nullptr);
  void send(ByteView message);
  ResultFrame receive_result(std::uint32_t frame_id);

  void send_config(std::optional<std::uint32_t> split, CodecId codec);

  std::uint32_t next_frame_id() const noexcept { return next_frame_id_; }
  void set_next_frame_id(std::uint32_t id) noexcept { next_frame_id_ = id; }
  Channel& channel() noexcept { return *channel_; }

 private:
  const ModelGraph& model_;
  std::unique_ptr<Channel> channel_;
  ClientOptions options_;
  std::uint32_t next_frame_id_ = 1;
};

// Encodes the client side of one frame: head forward, then the codec.
TensorFrame build_frame(const ModelGraph& model, const Tensor& input, std::optional<std::uint32_t> split, CodecId codec,
                        std::uint32_t frame_id);

// Connects, handshakes and runs one inference against a TCP server.
InferResult client_infer(const ModelGraph& model, const std::string& server_address, const Tensor& input,
                         std::optional<std::uint32_t> split, CodecId codec, ClientOptions options = {});

}  // namespace splitwire
