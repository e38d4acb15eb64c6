// SPDX-License-Identifier: Apache-2.0
#include "fedseq/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "fedseq/error.hpp"

namespace fedseq {
namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left > 0 ? static_cast<int>(std::min<long long>(left, 1 << 30)) : 0;
}

std::string errno_text() { return std::strerror(errno); }

void write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Io, "socket write failed: " + errno_text());
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

void read_exact(int fd, std::uint8_t* data, std::size_t size, Clock::time_point deadline) {
  while (size > 0) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, remaining_ms(deadline));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Io, "poll failed: " + errno_text());
    }
    if (ready == 0) fail(ErrorCode::Timeout, "timed out waiting for peer data");
    const ssize_t n = ::recv(fd, data, size, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Io, "socket read failed: " + errno_text());
    }
    if (n == 0) fail(ErrorCode::Protocol, "peer closed the connection mid-stream");
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

}  // namespace

SimulatedTransport::SimulatedTransport(std::vector<FederationClient*> clients, Execution execution,
                                       MessageObserver observer)
    : execution_(execution), observer_(std::move(observer)) {
  for (FederationClient* c : clients) {
    require(c != nullptr, ErrorCode::InvalidArgument, "null client");
    require(clients_.emplace(c->id(), c).second, ErrorCode::InvalidArgument, "duplicate client id " + c->id());
    client_inbox_[c->id()];
  }
}

void SimulatedTransport::deliver_to_server(const std::string& client_id, const Bytes& frame) {
  RoundMessage decoded = decode_message(frame);
  std::lock_guard lock(mutex_);
  bytes_ += frame.size();
  if (observer_) observer_(MessageDirection::ToServer, client_id, decoded);
  server_inbox_.push_back(frame);
}

void SimulatedTransport::connect() {
  for (auto& [id, client] : clients_) deliver_to_server(id, encode_message(client->register_message()));
}

void SimulatedTransport::send(const std::string& client_id, const RoundMessage& message) {
  auto it = client_inbox_.find(client_id);
  require(it != client_inbox_.end(), ErrorCode::Protocol, "no simulated client named " + client_id);
  Bytes frame = encode_message(message);
  if (observer_) observer_(MessageDirection::ToClient, client_id, decode_message(frame));
  bytes_ += frame.size();
  if (unresponsive_.contains(client_id)) return;
  it->second.push_back(std::move(frame));
}

void SimulatedTransport::set_unresponsive(const std::string& client_id) { unresponsive_.insert(client_id); }

void SimulatedTransport::pump() {
  std::vector<std::pair<FederationClient*, std::deque<Bytes>>> work;
  for (auto& [id, inbox] : client_inbox_) {
    if (!inbox.empty()) work.emplace_back(clients_.at(id), std::exchange(inbox, {}));
  }
  auto serve = [this](FederationClient* client, std::deque<Bytes>& inbox) {
    for (const Bytes& frame : inbox) {
      if (auto reply = client->on_message(decode_message(frame))) {
        deliver_to_server(client->id(), encode_message(*reply));
      }
    }
  };
  if (execution_ == Execution::Sequential || work.size() < 2) {
    for (auto& [client, inbox] : work) serve(client, inbox);
    return;
  }
  std::vector<std::exception_ptr> errors(work.size());
  std::vector<std::thread> threads;
  threads.reserve(work.size());
  for (std::size_t i = 0; i < work.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        serve(work[i].first, work[i].second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RoundMessage SimulatedTransport::receive(std::chrono::milliseconds) {
  if (server_inbox_.empty()) pump();
  if (server_inbox_.empty()) fail(ErrorCode::Timeout, "no client responded within the round");
  Bytes frame = std::move(server_inbox_.front());
  server_inbox_.pop_front();
  return decode_message(frame);
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
  const std::size_t colon = address.rfind(':');
  require(colon != std::string::npos, ErrorCode::InvalidArgument, "address must be host:port, got '" + address + "'");
  std::string host = address.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  const std::string port_text = address.substr(colon + 1);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(port_text, &used);
    require(used == port_text.size(), ErrorCode::InvalidArgument, "bad port");
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidArgument, "bad port in address '" + address + "'");
  }
  require(port <= 65535, ErrorCode::InvalidArgument, "port out of range in '" + address + "'");
  return {host, static_cast<std::uint16_t>(port)};
}

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void send_frame(const Socket& socket, const RoundMessage& message) {
  const Bytes frame = encode_message(message);
  write_all(socket.fd(), frame.data(), frame.size());
}

RoundMessage receive_frame(const Socket& socket, std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  Bytes frame(kFramePrefixSize);
  read_exact(socket.fd(), frame.data(), frame.size(), deadline);
  std::optional<std::size_t> total;
  while (!(total = frame_size(frame))) {
    // The prefix is complete; the id and the two u64 fields are still missing.
    const std::size_t id_len = static_cast<std::size_t>(frame[kFramePrefixSize - 2]) |
                               (static_cast<std::size_t>(frame[kFramePrefixSize - 1]) << 8);
    const std::size_t want = kFramePrefixSize + id_len + 16;
    const std::size_t have = frame.size();
    frame.resize(want);
    read_exact(socket.fd(), frame.data() + have, want - have, deadline);
  }
  const std::size_t have = frame.size();
  frame.resize(*total);
  read_exact(socket.fd(), frame.data() + have, *total - have, deadline);
  return decode_message(frame);
}

TcpServerTransport::TcpServerTransport(const std::string& listen_address) {
  auto [host, port] = parse_address(listen_address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  const std::string port_text = std::to_string(port);
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_text.c_str(), &hints, &result);
  if (rc != 0) fail(ErrorCode::Io, "cannot resolve " + listen_address + ": " + ::gai_strerror(rc));
  std::string last_error = "no usable address";
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    int yes = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.fd(), 64) == 0) {
      listener_ = std::move(s);
      break;
    }
    last_error = errno_text();
  }
  ::freeaddrinfo(result);
  if (!listener_.valid()) fail(ErrorCode::Io, "cannot listen on " + listen_address + ": " + last_error);

  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
  if (bound.ss_family == AF_INET) {
    port_ = ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  } else if (bound.ss_family == AF_INET6) {
    port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
  }
}

void TcpServerTransport::accept_clients(std::size_t count, std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  while (connections_.size() < count) {
    pollfd p{listener_.fd(), POLLIN, 0};
    const int ready = ::poll(&p, 1, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) {
      fail(ErrorCode::Timeout, "only " + std::to_string(connections_.size()) + " of " + std::to_string(count) +
                                   " clients connected before the timeout");
    }
    Socket conn(::accept(listener_.fd(), nullptr, nullptr));
    if (!conn.valid()) continue;
    int yes = 1;
    ::setsockopt(conn.fd(), IPPROTO_TCP, TCP_NODELAY, &yes, sizeof yes);
    RoundMessage hello = receive_frame(conn, std::chrono::milliseconds(remaining_ms(deadline)));
    require(hello.tag == MessageTag::Register, ErrorCode::Protocol, "first frame from a client must be REGISTER");
    require(!connections_.contains(hello.client_id), ErrorCode::Protocol,
            "client id " + hello.client_id + " connected twice");
    connections_.emplace(hello.client_id, std::move(conn));
    pending_.push_back(std::move(hello));
  }
}

void TcpServerTransport::send(const std::string& client_id, const RoundMessage& message) {
  auto it = connections_.find(client_id);
  require(it != connections_.end(), ErrorCode::Protocol, "no connection for client " + client_id);
  send_frame(it->second, message);
}

RoundMessage TcpServerTransport::receive(std::chrono::milliseconds timeout) {
  if (!pending_.empty()) {
    RoundMessage m = std::move(pending_.front());
    pending_.pop_front();
    return m;
  }
  require(!connections_.empty(), ErrorCode::Protocol, "no connected clients");
  const auto deadline = Clock::now() + timeout;
  std::vector<pollfd> fds;
  std::vector<const std::string*> ids;
  for (const auto& [id, socket] : connections_) {
    fds.push_back({socket.fd(), POLLIN, 0});
    ids.push_back(&id);
  }
  while (true) {
    const int ready = ::poll(fds.data(), fds.size(), remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) fail(ErrorCode::Io, "poll failed: " + errno_text());
    if (ready == 0) fail(ErrorCode::Timeout, "no client update arrived before the round timeout");
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) {
        RoundMessage m = receive_frame(connections_.at(*ids[i]), std::chrono::milliseconds(remaining_ms(deadline) + 1));
        require(m.client_id == *ids[i], ErrorCode::Protocol,
                "connection of " + *ids[i] + " sent a message as " + m.client_id);
        return m;
      }
    }
  }
}

std::uint32_t run_tcp_client(const std::string& server_address, FederationClient& client,
                             std::chrono::milliseconds connect_timeout, std::chrono::milliseconds round_timeout) {
  auto [host, port] = parse_address(server_address);
  const auto deadline = Clock::now() + connect_timeout;
  Socket socket;
  std::string last_error = "no address";
  while (!socket.valid()) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    const std::string port_text = std::to_string(port);
    const int rc = ::getaddrinfo(host.empty() ? "127.0.0.1" : host.c_str(), port_text.c_str(), &hints, &result);
    if (rc != 0) fail(ErrorCode::Io, "cannot resolve " + server_address + ": " + ::gai_strerror(rc));
    for (addrinfo* ai = result; ai != nullptr && !socket.valid(); ai = ai->ai_next) {
      Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!s.valid()) continue;
      if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
        socket = std::move(s);
      } else {
        last_error = errno_text();
      }
    }
    ::freeaddrinfo(result);
    if (socket.valid()) break;
    if (Clock::now() >= deadline) fail(ErrorCode::Timeout, "cannot connect to " + server_address + ": " + last_error);
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  int yes = 1;
  ::setsockopt(socket.fd(), IPPROTO_TCP, TCP_NODELAY, &yes, sizeof yes);

  send_frame(socket, client.register_message());
  std::uint32_t rounds = 0;
  while (client.phase() != ClientPhase::Stopped) {
    const RoundMessage m = receive_frame(socket, round_timeout);
    if (auto reply = client.on_message(m)) {
      send_frame(socket, *reply);
      ++rounds;
    }
  }
  return rounds;
}

}  // namespace fedseq
