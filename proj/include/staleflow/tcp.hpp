// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "staleflow/result.hpp"
#include "staleflow/wire.hpp"

namespace staleflow {

// Thin RAII wrappers over POSIX sockets, loopback-oriented. Frame I/O sits on
// top of FrameReader so partial reads are handled uniformly.
class TcpSocket {
 public:
  TcpSocket() = default;
  explicit TcpSocket(int fd) : fd_(fd) {}
  TcpSocket(TcpSocket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  TcpSocket& operator=(TcpSocket&& o) noexcept;
  TcpSocket(const TcpSocket&) = delete;
  TcpSocket& operator=(const TcpSocket&) = delete;
  ~TcpSocket();

  static Result<TcpSocket> connect(const std::string& host, std::uint16_t port,
                                   double timeout_sec = 5.0);

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();

  Status set_recv_timeout(double seconds);

  Status send_all(const std::uint8_t* data, std::size_t len);
  Status send_frame(const Frame& frame);
  // Reads from the socket until `reader` yields one frame. Errc::IoError on
  // disconnect, Errc::BadFrame / FrameTooLarge on protocol violations.
  Result<Frame> recv_frame(FrameReader& reader);

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  TcpListener(TcpListener&& o) noexcept : fd_(o.fd_), port_(o.port_) { o.fd_ = -1; }
  TcpListener& operator=(TcpListener&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      port_ = o.port_;
      o.fd_ = -1;
    }
    return *this;
  }
  TcpListener(const TcpListener&) = delete;
  ~TcpListener();

  // port 0 binds an ephemeral port; port() reports the actual one.
  static Result<TcpListener> bind_loopback(std::uint16_t port);

  std::uint16_t port() const { return port_; }
  bool valid() const { return fd_ >= 0; }
  Result<TcpSocket> accept();
  void close();  // unblocks a pending accept

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace staleflow
