// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

// Binary framing shared by the queue service and weight sync:
//
//   frame := u32 big-endian total_length  (bytes after this field)
//          | u8  message_type
//          | u32 big-endian header_length
//          | header (UTF-8 JSON, header_length bytes)
//          | raw payload bytes            (remainder)
//
// The whole frame, length prefix included, must not exceed 64 MiB.
enum class MsgType : std::uint8_t {
  PutField = 0x01,
  GetBatch = 0x02,
  Subscribe = 0x03,
  Event = 0x04,
  MarkConsumed = 0x05,
  Stats = 0x06,
  Gc = 0x07,
  WeightOffer = 0x10,
  WeightShard = 0x11,
  WeightAck = 0x12,
  Error = 0x7F,
};

bool msg_type_known(std::uint8_t t);

constexpr std::size_t kMaxFrameBytes = 64ull * 1024 * 1024;

struct Frame {
  MsgType type = MsgType::Error;
  nlohmann::json header;
  Bytes payload;

  static Frame error(Errc code, const std::string& message) {
    Frame f;
    f.type = MsgType::Error;
    f.header = {{"code", errc_name(code)}, {"message", message}};
    return f;
  }
};

// Serializes; fails with FrameTooLarge when the encoded frame would exceed the cap.
Result<Bytes> encode_frame(const Frame& frame);

// Decodes one complete frame from a buffer that contains exactly one frame.
Result<Frame> decode_frame(const std::uint8_t* data, std::size_t len);
Result<Frame> decode_frame(const Bytes& buf);

// Incremental decoder for stream transports. Feed arbitrary chunks; complete
// frames come out in order. A malformed prefix poisons the stream.
class FrameReader {
 public:
  void feed(const std::uint8_t* data, std::size_t len);
  // nullopt: need more bytes. Error: malformed stream (sticky).
  Result<std::optional<Frame>> next();

 private:
  Bytes buf_;
  std::size_t consumed_ = 0;
  std::optional<Error> poisoned_;
};

}  // namespace staleflow
