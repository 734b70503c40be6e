// SPDX-License-Identifier: Apache-2.0
#include "staleflow/wire.hpp"

#include <cstring>

namespace staleflow {

namespace {

void put_u32_be(Bytes& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

}  // namespace

bool msg_type_known(std::uint8_t t) {
  switch (MsgType(t)) {
    case MsgType::PutField:
    case MsgType::GetBatch:
    case MsgType::Subscribe:
    case MsgType::Event:
    case MsgType::MarkConsumed:
    case MsgType::Stats:
    case MsgType::Gc:
    case MsgType::WeightOffer:
    case MsgType::WeightShard:
    case MsgType::WeightAck:
    case MsgType::Error:
      return true;
  }
  return false;
}

Result<Bytes> encode_frame(const Frame& frame) {
  std::string header = frame.header.dump();
  std::size_t total = 1 + 4 + header.size() + frame.payload.size();
  if (4 + total > kMaxFrameBytes)
    return Result<Bytes>::err(Errc::FrameTooLarge,
                              "frame of " + std::to_string(4 + total) + " bytes exceeds 64 MiB");
  Bytes out;
  out.reserve(4 + total);
  put_u32_be(out, std::uint32_t(total));
  out.push_back(std::uint8_t(frame.type));
  put_u32_be(out, std::uint32_t(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

Result<Frame> decode_frame(const std::uint8_t* data, std::size_t len) {
  if (len < 9) return Result<Frame>::err(Errc::BadFrame, "frame shorter than fixed prefix");
  std::uint32_t total = get_u32_be(data);
  if (4ull + total > kMaxFrameBytes)
    return Result<Frame>::err(Errc::FrameTooLarge, "declared frame length exceeds 64 MiB");
  if (std::size_t(total) + 4 != len)
    return Result<Frame>::err(Errc::BadFrame, "frame length mismatch");
  std::uint8_t type = data[4];
  if (!msg_type_known(type))
    return Result<Frame>::err(Errc::BadFrame, "unknown message type " + std::to_string(type));
  std::uint32_t header_len = get_u32_be(data + 5);
  if (std::size_t(header_len) + 5 > total)
    return Result<Frame>::err(Errc::BadFrame, "header length exceeds frame");
  Frame f;
  f.type = MsgType(type);
  try {
    f.header = nlohmann::json::parse(data + 9, data + 9 + header_len);
  } catch (const nlohmann::json::exception& e) {
    return Result<Frame>::err(Errc::BadFrame, std::string("header is not valid JSON: ") + e.what());
  }
  f.payload.assign(data + 9 + header_len, data + 4 + total);
  return f;
}

Result<Frame> decode_frame(const Bytes& buf) { return decode_frame(buf.data(), buf.size()); }

void FrameReader::feed(const std::uint8_t* data, std::size_t len) {
  buf_.insert(buf_.end(), data, data + len);
}

Result<std::optional<Frame>> FrameReader::next() {
  using R = Result<std::optional<Frame>>;
  if (poisoned_) return R(*poisoned_);
  // Compact once the consumed prefix dominates.
  if (consumed_ > 0 && consumed_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + std::ptrdiff_t(consumed_));
    consumed_ = 0;
  }
  std::size_t avail = buf_.size() - consumed_;
  if (avail < 4) return R(std::optional<Frame>{});
  const std::uint8_t* p = buf_.data() + consumed_;
  std::uint32_t total = get_u32_be(p);
  if (4ull + total > kMaxFrameBytes) {
    poisoned_ = make_error(Errc::FrameTooLarge, "declared frame length exceeds 64 MiB");
    return R(*poisoned_);
  }
  if (total < 5) {
    poisoned_ = make_error(Errc::BadFrame, "frame too short for type and header length");
    return R(*poisoned_);
  }
  if (avail < 4ull + total) return R(std::optional<Frame>{});
  auto decoded = decode_frame(p, 4 + total);
  if (!decoded.ok()) {
    poisoned_ = decoded.error();
    return R(*poisoned_);
  }
  consumed_ += 4 + total;
  return R(std::optional<Frame>(std::move(decoded.value())));
}

}  // namespace staleflow
