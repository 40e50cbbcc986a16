// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qkdlink/protocol.hpp"

namespace qkdlink {

enum class Role : uint8_t { Alice, Bob };

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reliable ordered byte stream; the two concrete flavors are an in-process
/// queue pair and a TCP connection.
class ByteChannel {
 public:
  virtual ~ByteChannel() = default;

  /// Appends available bytes to buf. With blocking=true waits until at least
  /// one byte arrives or the peer has closed. Returns false only at end of
  /// stream (peer closed and everything consumed).
  virtual bool read_available(std::vector<uint8_t>& buf, bool blocking) = 0;

  /// Writes the whole span; throws TransportError once the stream is closed.
  virtual void write(std::span<const uint8_t> data) = 0;

  virtual void close_write() = 0;
};

struct MemoryChannelPair {
  std::unique_ptr<ByteChannel> alice_side;
  std::unique_ptr<ByteChannel> bob_side;
};

/// Paired in-process byte queues (unbounded, condition-variable blocking).
MemoryChannelPair make_memory_channel_pair();

/// TCP listener bound to "host:port" (port 0 picks an ephemeral port).
class TcpListener {
 public:
  explicit TcpListener(const std::string& address);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  uint16_t port() const { return port_; }
  std::unique_ptr<ByteChannel> accept_one();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

/// Dials "host:port", retrying briefly while the listener comes up.
std::unique_ptr<ByteChannel> tcp_connect(const std::string& address);

/// One side of a protocol session: length-prefixed messages over a byte
/// channel, delivered reliably, in order, exactly once.
class Endpoint {
 public:
  Endpoint(Role role, std::unique_ptr<ByteChannel> channel)
      : role_(role), channel_(std::move(channel)) {}

  Role role() const { return role_; }

  void send(const Message& msg) { channel_->write(encode_message(msg)); }

  /// Blocks for the next complete message; nullopt signals a clean end of
  /// session. Partial trailing bytes at close raise TransportError.
  std::optional<Message> receive();

  /// Non-blocking variant: nullopt when no complete message is buffered yet
  /// (check session_ended() to distinguish a closed session).
  std::optional<Message> poll();

  bool session_ended() const { return eof_ && read_pos_ == buffer_.size(); }

  void close_write() { channel_->close_write(); }

 private:
  std::optional<Message> try_extract();

  Role role_;
  std::unique_ptr<ByteChannel> channel_;
  std::vector<uint8_t> buffer_;
  size_t read_pos_ = 0;
  bool eof_ = false;
};

}  // namespace qkdlink
