// SPDX-License-Identifier: Apache-2.0
#include "staleflow/tcp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

namespace staleflow {

TcpSocket& TcpSocket::operator=(TcpSocket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

TcpSocket::~TcpSocket() { close(); }

void TcpSocket::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

Result<TcpSocket> TcpSocket::connect(const std::string& host, std::uint16_t port,
                                     double timeout_sec) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return Result<TcpSocket>::err(Errc::IoError, "socket: " + std::string(strerror(errno)));
  TcpSocket sock(fd);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    return Result<TcpSocket>::err(Errc::IoError, "bad address: " + host);

  timeval tv{};
  tv.tv_sec = long(timeout_sec);
  tv.tv_usec = long((timeout_sec - std::floor(timeout_sec)) * 1e6);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));

  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    return Result<TcpSocket>::err(Errc::IoError, "connect " + host + ":" + std::to_string(port) +
                                                     ": " + strerror(errno));
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return sock;
}

Status TcpSocket::set_recv_timeout(double seconds) {
  timeval tv{};
  tv.tv_sec = long(seconds);
  tv.tv_usec = long((seconds - std::floor(seconds)) * 1e6);
  if (::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv)) != 0)
    return Status::err(Errc::IoError, strerror(errno));
  return ok_status();
}

Status TcpSocket::send_all(const std::uint8_t* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    ssize_t n = ::send(fd_, data + sent, len - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return Status::err(Errc::IoError, "send: " + std::string(strerror(errno)));
    }
    sent += std::size_t(n);
  }
  return ok_status();
}

Status TcpSocket::send_frame(const Frame& frame) {
  auto encoded = encode_frame(frame);
  if (!encoded.ok()) return Status(encoded.error());
  return send_all(encoded.value().data(), encoded.value().size());
}

Result<Frame> TcpSocket::recv_frame(FrameReader& reader) {
  std::uint8_t buf[16384];
  for (;;) {
    auto next = reader.next();
    if (!next.ok()) return Result<Frame>(next.error());
    if (next.value().has_value()) return std::move(*next.value());
    ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n == 0) return Result<Frame>::err(Errc::IoError, "peer closed connection");
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        return Result<Frame>::err(Errc::ReplicaTimeout, "recv timed out");
      return Result<Frame>::err(Errc::IoError, "recv: " + std::string(strerror(errno)));
    }
    reader.feed(buf, std::size_t(n));
  }
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

Result<TcpListener> TcpListener::bind_loopback(std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0)
    return Result<TcpListener>::err(Errc::IoError, "socket: " + std::string(strerror(errno)));
  TcpListener lst;
  lst.fd_ = fd;
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    return Result<TcpListener>::err(Errc::IoError, "bind: " + std::string(strerror(errno)));
  if (::listen(fd, 64) != 0)
    return Result<TcpListener>::err(Errc::IoError, "listen: " + std::string(strerror(errno)));
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  lst.port_ = ntohs(addr.sin_port);
  return lst;
}

Result<TcpSocket> TcpListener::accept() {
  for (;;) {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return TcpSocket(fd);
    }
    if (errno == EINTR) continue;
    return Result<TcpSocket>::err(Errc::IoError, "accept: " + std::string(strerror(errno)));
  }
}

}  // namespace staleflow
