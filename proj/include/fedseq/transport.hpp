// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "fedseq/federation.hpp"
#include "fedseq/wire.hpp"

namespace fedseq {

enum class MessageDirection { ToServer, ToClient };

/// Sees every message that crosses a transport, after decoding.
using MessageObserver = std::function<void(MessageDirection, const std::string& client_id, const RoundMessage&)>;

/// In-process transport. Every message is encoded to its wire bytes and
/// decoded on the other side, so the semantics match the socket transport.
/// Clients either run one after another or each on its own thread; the
/// server aggregates in client_id order, so both give identical results.
class SimulatedTransport : public ServerTransport {
 public:
  enum class Execution { Sequential, Threaded };

  SimulatedTransport(std::vector<FederationClient*> clients, Execution execution = Execution::Sequential,
                     MessageObserver observer = {});

  /// Queues a REGISTER from every client.
  void connect();

  void send(const std::string& client_id, const RoundMessage& message) override;
  RoundMessage receive(std::chrono::milliseconds timeout) override;

  /// Test hook: the client silently drops everything it is sent.
  void set_unresponsive(const std::string& client_id);

  std::size_t bytes_transferred() const noexcept { return bytes_; }

 private:
  void pump();
  void deliver_to_server(const std::string& client_id, const Bytes& frame);

  std::map<std::string, FederationClient*> clients_;
  std::map<std::string, std::deque<Bytes>> client_inbox_;
  std::deque<Bytes> server_inbox_;
  std::set<std::string> unresponsive_;
  Execution execution_;
  MessageObserver observer_;
  std::mutex mutex_;
  std::size_t bytes_ = 0;
};

/// Splits "host:port"; an empty host means any interface.
std::pair<std::string, std::uint16_t> parse_address(const std::string& address);

/// Owns a connected or listening socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

/// Writes one framed message.
void send_frame(const Socket& socket, const RoundMessage& message);
/// Reads exactly one framed message, waiting at most timeout overall.
RoundMessage receive_frame(const Socket& socket, std::chrono::milliseconds timeout);

/// Server side of the TCP byte-stream transport. Each client holds one
/// connection; its first frame must be REGISTER.
class TcpServerTransport : public ServerTransport {
 public:
  explicit TcpServerTransport(const std::string& listen_address);

  std::uint16_t port() const noexcept { return port_; }

  /// Accepts connections until `count` distinct clients have registered.
  /// Their REGISTER messages are then returned by receive().
  void accept_clients(std::size_t count, std::chrono::milliseconds timeout);

  void send(const std::string& client_id, const RoundMessage& message) override;
  RoundMessage receive(std::chrono::milliseconds timeout) override;

 private:
  Socket listener_;
  std::uint16_t port_ = 0;
  std::map<std::string, Socket> connections_;
  std::deque<RoundMessage> pending_;
};

/// Connects to a server (retrying until connect_timeout), registers, and
/// serves GLOBAL messages until DONE. Returns the number of rounds trained.
std::uint32_t run_tcp_client(const std::string& server_address, FederationClient& client,
                             std::chrono::milliseconds connect_timeout, std::chrono::milliseconds round_timeout);

}  // namespace fedseq
