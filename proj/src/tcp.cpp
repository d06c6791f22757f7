#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mdf/transport.hpp"

namespace mdf::transport {

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(Errc::Io, what + ": " + std::strerror(errno));
}

void send_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("send");
    }
    off += static_cast<std::size_t>(n);
  }
}

enum class ReadStatus { Line, Timeout, Closed };

/// Pulls one '\n'-terminated line out of fd, buffering the remainder.
ReadStatus read_line(int fd, std::string& buffer, std::string& line, int timeout_ms) {
  while (true) {
    const auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      line.assign(buffer, 0, nl);
      buffer.erase(0, nl + 1);
      return ReadStatus::Line;
    }
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, timeout_ms);
    if (r < 0) {
      if (errno == EINTR) continue;
      sys_fail("poll");
    }
    if (r == 0) return ReadStatus::Timeout;
    char chunk[65536];
    const auto n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return ReadStatus::Closed;
    }
    if (n == 0) return ReadStatus::Closed;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

int connect_to(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error(Errc::Io, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    sys_fail("socket");
  }
  if (::connect(fd, res->ai_addr, res->ai_addrlen) < 0) {
    ::freeaddrinfo(res);
    ::close(fd);
    sys_fail("connect " + host + ":" + std::to_string(port));
  }
  ::freeaddrinfo(res);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

Json error_reply(const Json& id, Errc code, const std::string& message) {
  return {{"op", "error"}, {"id", id}, {"code", errc_name(code)}, {"message", message}};
}

[[noreturn]] void rethrow_reply(const Json& reply) {
  throw Error(errc_from_name(reply.value("code", "Io")), reply.value("message", "remote error"));
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == endpoint.size()) {
    throw Error(Errc::BadConfig, "endpoint must be HOST:PORT, got '" + std::string(endpoint) + "'");
  }
  int port = 0;
  for (char c : endpoint.substr(colon + 1)) {
    if (c < '0' || c > '9' || port > 65535) throw Error(Errc::BadConfig, "bad port in '" + std::string(endpoint) + "'");
    port = port * 10 + (c - '0');
  }
  if (port > 65535) throw Error(Errc::BadConfig, "bad port in '" + std::string(endpoint) + "'");
  return {std::string(endpoint.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

//=============================================================================
// Server
//=============================================================================

struct TcpServer::Connection {
  int fd = -1;
  std::mutex write_mu;
  std::set<std::uint64_t> seen_ids;
  std::vector<std::shared_ptr<Subscription>> subs;
  std::vector<std::thread> pumps;

  void write(const Json& doc) {
    std::lock_guard lock(write_mu);
    send_all(fd, doc.dump() + "\n");
  }
};

TcpServer::TcpServer(Broker& broker, std::uint16_t port, std::string bind_host) : broker_(broker) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error(Errc::BadConfig, "bind host must be an IPv4 address: " + bind_host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    sys_fail("bind/listen");
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  {
    std::lock_guard lock(conns_mu_);
    for (auto& c : conns_) ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto& w : workers_) w.join();
  workers_.clear();
}

void TcpServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(conns_mu_);
    conns_.push_back(conn);
    workers_.emplace_back([this, conn] { serve(conn); });
  }
}

void TcpServer::serve(std::shared_ptr<Connection> conn) {
  std::string buffer, line;
  while (running_) {
    const auto status = read_line(conn->fd, buffer, line, 100);
    if (status == ReadStatus::Timeout) continue;
    if (status == ReadStatus::Closed) break;
    Json req, id;
    try {
      req = Json::parse(line);
      id = req.value("id", Json());
      const auto op = req.at("op").get<std::string>();
      if (op == "publish") {
        const auto msg = decode(req.at("msg"));
        const auto nid = id.is_number_unsigned() ? id.get<std::uint64_t>() : 0;
        std::uint64_t seq = 0;
        if (nid == 0 || conn->seen_ids.insert(nid).second) {
          try {
            seq = broker_.publish(msg).sequence;
          } catch (...) {
            conn->seen_ids.erase(nid);
            throw;
          }
        }
        conn->write({{"op", "ack"}, {"id", id}, {"seq", seq}});
      } else if (op == "register") {
        broker_.register_topic(req.at("topic").get<std::string>());
        conn->write({{"op", "ack"}, {"id", id}});
      } else if (op == "fetch") {
        const auto m = broker_.fetch(req.at("topic").get<std::string>());
        conn->write({{"op", "fetched"}, {"id", id}, {"msg", encode(m)}});
      } else if (op == "subscribe") {
        auto sub = broker_.subscribe(req.at("filter").get<std::string>());
        conn->subs.push_back(sub);
        conn->write({{"op", "ack"}, {"id", id}});
        conn->pumps.emplace_back([this, conn, sub] {
          try {
            while (running_ && !sub->closed()) {
              if (auto m = sub->pop_for(std::chrono::milliseconds(50))) {
                conn->write({{"op", "message"}, {"msg", encode(*m)}});
              }
            }
          } catch (const Error&) {
            // peer went away
          }
        });
      } else {
        conn->write(error_reply(id, Errc::InvalidArgument, "unknown op '" + op + "'"));
      }
    } catch (const Error& e) {
      try {
        conn->write(error_reply(id, e.code(), e.what()));
      } catch (const Error&) {
        break;
      }
    } catch (const Json::exception& e) {
      try {
        conn->write(error_reply(id, Errc::SchemaViolation, e.what()));
      } catch (const Error&) {
        break;
      }
    }
  }
  for (auto& s : conn->subs) broker_.unsubscribe(s);
  for (auto& t : conn->pumps) t.join();
  ::close(conn->fd);
}

//=============================================================================
// Clients
//=============================================================================

TcpClient::TcpClient(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout)
    : fd_(connect_to(host, port)), timeout_(timeout) {}

TcpClient::~TcpClient() {
  if (fd_ >= 0) ::close(fd_);
}

Json TcpClient::request(Json req, bool retry) {
  const auto id = next_id_++;
  req["id"] = id;
  const auto wire = req.dump() + "\n";
  for (int attempt = 0; attempt < (retry ? 2 : 1); ++attempt) {
    if (attempt > 0) ++retries_;
    send_all(fd_, wire);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    std::string line;
    while (true) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) break;
      const auto status = read_line(fd_, buffer_, line, static_cast<int>(left.count()));
      if (status == ReadStatus::Closed) throw Error(Errc::Io, "connection closed by server");
      if (status == ReadStatus::Timeout) break;
      Json reply;
      try {
        reply = Json::parse(line);
      } catch (const Json::parse_error& e) {
        throw Error(Errc::SchemaViolation, std::string("reply: ") + e.what());
      }
      // Late replies to an earlier attempt share the id and are equally valid.
      if (reply.value("id", Json()) != Json(id)) continue;
      if (reply.value("op", "") == "error") rethrow_reply(reply);
      return reply;
    }
  }
  throw Error(Errc::Timeout, "no reply to " + req.value("op", std::string("request")));
}

std::uint64_t TcpClient::publish(const Message& m) {
  return request({{"op", "publish"}, {"msg", encode(m)}}, true).value("seq", std::uint64_t{0});
}

void TcpClient::register_topic(std::string_view topic) {
  (void)request({{"op", "register"}, {"topic", std::string(topic)}}, true);
}

Message TcpClient::fetch(std::string_view topic) {
  return decode(request({{"op", "fetch"}, {"topic", std::string(topic)}}, false).at("msg"));
}

TcpSubscription::TcpSubscription(const std::string& host, std::uint16_t port, std::string_view filter,
                                 std::chrono::milliseconds timeout)
    : fd_(connect_to(host, port)) {
  send_all(fd_, Json{{"op", "subscribe"}, {"id", 1}, {"filter", std::string(filter)}}.dump() + "\n");
  std::string line;
  if (read_line(fd_, buffer_, line, static_cast<int>(timeout.count())) != ReadStatus::Line) {
    ::close(fd_);
    throw Error(Errc::Timeout, "no subscribe acknowledgement");
  }
  const auto reply = Json::parse(line);
  if (reply.value("op", "") == "error") {
    ::close(fd_);
    rethrow_reply(reply);
  }
}

TcpSubscription::~TcpSubscription() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<Message> TcpSubscription::next(std::chrono::milliseconds timeout) {
  std::string line;
  while (true) {
    const auto status = read_line(fd_, buffer_, line, static_cast<int>(timeout.count()));
    if (status != ReadStatus::Line) return std::nullopt;
    const auto doc = Json::parse(line);
    if (doc.value("op", "") == "message") return decode(doc.at("msg"));
  }
}

}  // namespace mdf::transport
