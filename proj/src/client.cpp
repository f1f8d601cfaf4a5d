#include "splitwire/client.hpp"

#include "splitwire/codec.hpp"
#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"

namespace splitwire {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

[[noreturn]] void raise_remote(const ErrorMessage& e) { throw RemoteError(e.code, e.message); }

std::uint16_t wire_split(std::optional<std::uint32_t> split) {
  return split ? static_cast<std::uint16_t>(*split) : kRawInputSplit;
}

}  // namespace

TensorFrame build_frame(const ModelGraph& model, const Tensor& input, std::optional<std::uint32_t> split, CodecId codec,
                        std::uint32_t frame_id) {
  if (split && !model.is_valid_split(*split))
    throw InvalidSplitError("invalid split point " + std::to_string(*split));
  const Tensor feature = split ? forward_range(model, input, 0, *split) : input;
  return make_tensor_frame(frame_id, wire_split(split), codec, feature);
}

Client::Client(const ModelGraph& model, std::unique_ptr<Channel> channel, ClientOptions options)
    : model_(model), channel_(std::move(channel)), options_(options) {}

void Client::handshake() {
  channel_->send(encode_message(Hello{kProtocolVersion, model_.hash()}));
  auto reply = decode_message(channel_->receive(options_.timeout));
  if (const auto* e = std::get_if<ErrorMessage>(&reply)) raise_remote(*e);
  const auto* ack = std::get_if<HelloAck>(&reply);
  if (!ack) throw TransportError("expected HelloAck from server");
  if (ack->model_hash != model_.hash()) throw TransportError("server acknowledged a different model");
}

Bytes Client::prepare(const Tensor& input, std::optional<std::uint32_t> split, CodecId codec, InferTiming* timing) {
  if (input.shape() != model_.input_shape())
    throw ShapeError("input shape " + to_string(input.shape()) + " does not match model input " +
                     to_string(model_.input_shape()));
  auto t0 = Clock::now();
  const Tensor feature = split ? forward_range(model_, input, 0, *split) : input;
  if (split && !model_.is_valid_split(*split)) throw InvalidSplitError("invalid split point " + std::to_string(*split));
  const double head = seconds_since(t0);
  t0 = Clock::now();
  auto frame = make_tensor_frame(next_frame_id_++, wire_split(split), codec, feature);
  Bytes msg = encode_message(frame);
  if (timing) {
    timing->head_s = head;
    timing->encode_s = seconds_since(t0);
    timing->upload_bytes = msg.size();
    timing->payload_bytes = frame.payload.size();
  }
  return msg;
}

void Client::send(ByteView message) { channel_->send(message); }

ResultFrame Client::receive_result(std::uint32_t frame_id) {
  auto reply = decode_message(channel_->receive(options_.timeout));
  if (const auto* e = std::get_if<ErrorMessage>(&reply)) raise_remote(*e);
  auto* r = std::get_if<ResultFrame>(&reply);
  if (!r) throw TransportError("expected ResultFrame from server");
  if (r->frame_id != frame_id)
    throw TransportError("result for frame " + std::to_string(r->frame_id) + " while waiting for " +
                         std::to_string(frame_id));
  return std::move(*r);
}

void Client::send_config(std::optional<std::uint32_t> split, CodecId codec) {
  channel_->send(encode_message(ConfigUpdate{wire_split(split), codec}));
}

InferResult Client::infer(const Tensor& input, std::optional<std::uint32_t> split, CodecId codec) {
  InferResult out;
  const auto start = Clock::now();
  const auto id = next_frame_id_;
  Bytes msg = prepare(input, split, codec, &out.timing);
  auto t0 = Clock::now();
  channel_->send(msg);
  out.timing.upload_s = seconds_since(t0);
  t0 = Clock::now();
  out.result = receive_result(id);
  out.timing.remainder_s = seconds_since(t0);
  out.timing.total_s = seconds_since(start);
  return out;
}

InferResult client_infer(const ModelGraph& model, const std::string& server_address, const Tensor& input,
                         std::optional<std::uint32_t> split, CodecId codec, ClientOptions options) {
  Client client(model, SocketChannel::connect(net::parse_address(server_address), options.timeout), options);
  client.handshake();
  return client.infer(input, split, codec);
}

}  // namespace splitwire
