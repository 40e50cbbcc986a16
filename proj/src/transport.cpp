// SPDX-License-Identifier: Apache-2.0
#include "qkdlink/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <thread>

namespace qkdlink {

namespace {

// ---- in-process pipes ------------------------------------------------------

struct Pipe {
  std::mutex mutex;
  std::condition_variable cv;
  std::vector<uint8_t> data;
  size_t read_pos = 0;
  bool closed = false;
};

class MemoryChannel : public ByteChannel {
 public:
  MemoryChannel(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out)
      : in_(std::move(in)), out_(std::move(out)) {}

  bool read_available(std::vector<uint8_t>& buf, bool blocking) override {
    std::unique_lock lock(in_->mutex);
    if (blocking)
      in_->cv.wait(lock, [&] { return in_->read_pos < in_->data.size() || in_->closed; });
    if (in_->read_pos < in_->data.size()) {
      buf.insert(buf.end(), in_->data.begin() + in_->read_pos, in_->data.end());
      in_->read_pos = in_->data.size();
      if (in_->read_pos > (1u << 20)) {
        in_->data.clear();
        in_->read_pos = 0;
      }
      return true;
    }
    return !in_->closed;
  }

  void write(std::span<const uint8_t> data) override {
    std::lock_guard lock(out_->mutex);
    if (out_->closed) throw TransportError("write on closed channel");
    out_->data.insert(out_->data.end(), data.begin(), data.end());
    out_->cv.notify_one();
  }

  void close_write() override {
    std::lock_guard lock(out_->mutex);
    out_->closed = true;
    out_->cv.notify_one();
  }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

// ---- TCP -------------------------------------------------------------------

struct Address {
  std::string host;
  uint16_t port = 0;
};

Address parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos)
    throw TransportError("address must be host:port, got '" + address + "'");
  Address a;
  a.host = address.substr(0, colon);
  if (a.host == "localhost" || a.host.empty()) a.host = "127.0.0.1";
  const std::string port_str = address.substr(colon + 1);
  char* end = nullptr;
  const long port = std::strtol(port_str.c_str(), &end, 10);
  if (end == port_str.c_str() || *end != '\0' || port < 0 || port > 65535)
    throw TransportError("bad port in address '" + address + "'");
  a.port = uint16_t(port);
  return a;
}

sockaddr_in to_sockaddr(const Address& a) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(a.port);
  if (inet_pton(AF_INET, a.host.c_str(), &sa.sin_addr) != 1)
    throw TransportError("cannot parse IPv4 host '" + a.host + "'");
  return sa;
}

class TcpChannel : public ByteChannel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {}
  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  bool read_available(std::vector<uint8_t>& buf, bool blocking) override {
    if (read_eof_) return false;
    uint8_t chunk[65536];
    bool got_any = false;
    for (;;) {
      const int flags = (blocking && !got_any) ? 0 : MSG_DONTWAIT;
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), flags);
      if (n > 0) {
        buf.insert(buf.end(), chunk, chunk + n);
        got_any = true;
        continue;
      }
      if (n == 0) {
        read_eof_ = true;
        return got_any;
      }
      if (errno == EAGAIN || errno == EWOULDBLOCK) return true;
      if (errno == EINTR) continue;
      throw TransportError(std::string("recv failed: ") + std::strerror(errno));
    }
  }

  void write(std::span<const uint8_t> data) override {
    size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += size_t(n);
    }
  }

  void close_write() override { ::shutdown(fd_, SHUT_WR); }

 private:
  int fd_;
  bool read_eof_ = false;
};

}  // namespace

MemoryChannelPair make_memory_channel_pair() {
  auto a_to_b = std::make_shared<Pipe>();
  auto b_to_a = std::make_shared<Pipe>();
  MemoryChannelPair pair;
  pair.alice_side = std::make_unique<MemoryChannel>(b_to_a, a_to_b);
  pair.bob_side = std::make_unique<MemoryChannel>(a_to_b, b_to_a);
  return pair;
}

TcpListener::TcpListener(const std::string& address) {
  const auto addr = parse_address(address);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  auto sa = to_sockaddr(addr);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw TransportError("bind " + address + " failed: " + err);
  }
  if (::listen(fd_, 1) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw TransportError("listen failed: " + err);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<ByteChannel> TcpListener::accept_one() {
  for (;;) {
    const int client = ::accept(fd_, nullptr, nullptr);
    if (client >= 0) {
      const int one = 1;
      ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return std::make_unique<TcpChannel>(client);
    }
    if (errno == EINTR) continue;
    throw TransportError(std::string("accept failed: ") + std::strerror(errno));
  }
}

std::unique_ptr<ByteChannel> tcp_connect(const std::string& address) {
  const auto addr = parse_address(address);
  const auto sa = to_sockaddr(addr);
  for (int attempt = 0;; ++attempt) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return std::make_unique<TcpChannel>(fd);
    }
    ::close(fd);
    if (attempt >= 100) throw TransportError("connect to " + address + " failed");
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

std::optional<Message> Endpoint::try_extract() {
  const size_t avail = buffer_.size() - read_pos_;
  if (avail < 2) return std::nullopt;
  const size_t len = size_t(buffer_[read_pos_]) | size_t(buffer_[read_pos_ + 1]) << 8;
  if (avail < 2 + len) return std::nullopt;
  Message msg = decode_payload(std::span<const uint8_t>(buffer_.data() + read_pos_ + 2, len));
  read_pos_ += 2 + len;
  if (read_pos_ > (1u << 20) && read_pos_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + long(read_pos_));
    read_pos_ = 0;
  }
  return msg;
}

std::optional<Message> Endpoint::receive() {
  for (;;) {
    if (auto msg = try_extract()) return msg;
    if (eof_) {
      if (read_pos_ != buffer_.size())
        throw TransportError("truncated message at end of session");
      return std::nullopt;
    }
    if (!channel_->read_available(buffer_, true)) eof_ = true;
  }
}

std::optional<Message> Endpoint::poll() {
  if (auto msg = try_extract()) return msg;
  if (!eof_ && !channel_->read_available(buffer_, false)) eof_ = true;
  if (auto msg = try_extract()) return msg;
  if (eof_ && read_pos_ != buffer_.size())
    throw TransportError("truncated message at end of session");
  return std::nullopt;
}

}  // namespace qkdlink
