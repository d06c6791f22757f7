#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mdf/core.hpp"

namespace mdf::transport {

using Json = nlohmann::json;

//=============================================================================
// Topics
//=============================================================================

/// What a topic carries, decided by its shape:
///   edge/<cell>/<pipeline>/<sensor>   frames and feature vectors
///   edge/<cell>/errors                dead letters
///   edge/<cell>/<function>            fused feature grids
///   cloud/<cell>/<function>           classification results
///   cloud/<cell>/ssm                  monitor commands
///   cloud/<cell>/control              data controller updates
enum class TopicClass { SensorStream, EdgeErrors, EdgeGrid, CloudResult, CloudSsm, CloudControl };

class Topic {
 public:
  /// Throws InvalidArgument for a path outside the grammar above.
  static Topic parse(std::string_view path);

  static Topic sensor(std::string_view cell, const SensorId& sensor);
  static Topic errors(std::string_view cell);
  static Topic grid(std::string_view cell, HrcFunction f);
  static Topic result(std::string_view cell, HrcFunction f);
  static Topic ssm(std::string_view cell);
  static Topic control(std::string_view cell);

  const std::string& str() const noexcept { return path_; }
  TopicClass topic_class() const noexcept { return class_; }
  const std::vector<std::string>& segments() const noexcept { return segments_; }

 private:
  std::string path_;
  std::vector<std::string> segments_;
  TopicClass class_ = TopicClass::SensorStream;
};

/// Subscription filter; "+" stands for exactly one segment.
class TopicFilter {
 public:
  /// Throws BadFilter on empty segments or a "+" mixed into a segment.
  explicit TopicFilter(std::string_view filter);
  bool matches(std::string_view topic) const;
  const std::string& str() const noexcept { return text_; }

 private:
  std::string text_;
  std::vector<std::string> segments_;
};

//=============================================================================
// Messages
//=============================================================================

enum class Kind { Frame, Features, Grid, Classification, DeadLetter, Ssm, Control };

std::string_view kind_name(Kind kind) noexcept;
Kind kind_from_name(std::string_view name);

/// Envelope {"topic","t_ms","kind","payload"}; t_ms is wall-clock publish time.
struct Message {
  std::string topic;
  std::int64_t t_ms = 0;
  Kind kind = Kind::Frame;
  Json payload;

  friend bool operator==(const Message&, const Message&) = default;
};

Json encode(const Message& m);
/// One JSON document without trailing newline.
std::string encode_line(const Message& m);
/// Throws SchemaViolation for a malformed envelope or payload.
Message decode(const Json& doc);
Message decode_line(std::string_view line);

/// Throws SchemaViolation when the payload does not fit its kind.
void validate_payload(Kind kind, const Json& payload);
/// Throws SchemaViolation when the kind cannot travel on the topic.
void validate_route(const Topic& topic, Kind kind);

Json frame_to_json(const RawFrame& frame);
RawFrame frame_from_json(const Json& doc);

//=============================================================================
// Clocks and latency
//=============================================================================

/// Milliseconds as double, so sub-millisecond latencies survive.
using Clock = std::function<double()>;

/// Wall clock in ms since the Unix epoch.
double wall_ms();
Clock wall_clock();

/// A clock that only moves when told to; used by replay and tests.
class ManualClock {
 public:
  explicit ManualClock(double start_ms = 0.0) : now_(start_ms) {}
  double now() const { return now_.load(); }
  void set(double ms) { now_.store(ms); }
  void advance(double ms) { now_.store(now_.load() + ms); }
  Clock clock() {
    return [this] { return now(); };
  }

 private:
  std::atomic<double> now_;
};

/// classified - ingestion in ms; throws ClockSkew when negative.
double measure_latency(double ingestion_ms, double classified_ms);
double measure_latency(Timestamp ingestion, Timestamp classified);

struct LatencyStats {
  std::size_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

Json to_json(const LatencyStats& s);

/// Per-function latency samples. Thread-safe.
class LatencyRecorder {
 public:
  double record(HrcFunction f, double ingestion_ms, double classified_ms);
  void add(HrcFunction f, double latency_ms);
  LatencyStats stats(HrcFunction f) const;
  std::vector<double> samples(HrcFunction f) const;

 private:
  mutable std::mutex mu_;
  std::map<HrcFunction, std::vector<double>> samples_;
};

/// Nearest-rank percentile of an unsorted sample, q in [0, 1].
double percentile(std::vector<double> values, double q);

//=============================================================================
// In-process broker
//=============================================================================

enum class Overflow { DropOldest, DropNewest };

struct Ack {
  std::string topic;
  std::uint64_t sequence = 0;   // broker-wide publish order
  std::size_t delivered = 0;    // subscriber count reached
};

/// Queue of messages matching one filter. Consumed by exactly one reader.
class Subscription {
 public:
  Subscription(TopicFilter filter, std::size_t capacity, Overflow policy);

  std::optional<Message> try_pop();
  /// Waits up to timeout; empty on timeout or when closed and drained.
  std::optional<Message> pop_for(std::chrono::milliseconds timeout);
  std::size_t size() const;
  std::uint64_t dropped() const;
  void close();
  bool closed() const;
  const TopicFilter& filter() const noexcept { return filter_; }

 private:
  friend class Broker;
  void push(const Message& m);

  TopicFilter filter_;
  std::size_t capacity_;
  Overflow policy_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

struct BrokerOptions {
  std::size_t queue_capacity = 65536;
  Overflow overflow = Overflow::DropOldest;
  /// Check payloads against their schema on publish.
  bool validate = true;
};

/// Topic-based publish/subscribe with retained last values. Publishing holds
/// the broker lock while fanning out, so every subscriber sees one publisher's
/// messages in publish order.
class Broker {
 public:
  Broker() : Broker(BrokerOptions{}) {}
  explicit Broker(BrokerOptions options);

  void register_topic(std::string_view topic);
  bool registered(std::string_view topic) const;
  std::vector<std::string> topics() const;

  /// Throws UnknownTopic for an unregistered topic and SchemaViolation for a
  /// payload that does not fit.
  Ack publish(const Message& m);
  std::shared_ptr<Subscription> subscribe(std::string_view filter);
  void unsubscribe(const std::shared_ptr<Subscription>& sub);
  /// Most recent message on the topic. Throws NotFound.
  Message fetch(std::string_view topic) const;

  std::uint64_t dropped() const;
  std::uint64_t published() const;

 private:
  BrokerOptions options_;
  mutable std::mutex mu_;
  std::set<std::string, std::less<>> topics_;
  std::map<std::string, Message, std::less<>> retained_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::uint64_t sequence_ = 0;
};

//=============================================================================
// Capture and replay
//=============================================================================

/// Appends envelopes to a newline-delimited file.
class CaptureWriter {
 public:
  explicit CaptureWriter(const std::string& path);
  ~CaptureWriter();
  void write(const Message& m);
  std::size_t written() const noexcept { return written_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t written_ = 0;
};

/// Throws MissingFile when absent, SchemaViolation naming the bad line.
std::vector<Message> read_capture(const std::string& path);
void write_capture(const std::string& path, const std::vector<Message>& messages);

struct ReplayOptions {
  /// 0 replays as fast as possible; otherwise sleeps (dt / speed) between
  /// messages to follow the original timestamps.
  double speed = 0.0;
  /// Added to each message's t_ms to form the replay clock value handed to
  /// the sink; models a fixed processing delay.
  double stamp_delay_ms = 0.0;
};

/// Feeds messages in file order. The sink gets the replay clock reading.
void replay(const std::vector<Message>& messages, const ReplayOptions& options,
            const std::function<void(const Message&, double now_ms)>& sink);

//=============================================================================
// TCP binding
//=============================================================================

/// Serves a broker over newline-delimited JSON. Requests:
///   {"op":"publish","id":N,"msg":ENVELOPE}  -> {"op":"ack","id":N,"seq":S}
///   {"op":"subscribe","id":N,"filter":F}    -> ack, then {"op":"message","msg":...}
///   {"op":"fetch","id":N,"topic":T}         -> {"op":"fetched","id":N,"msg":...}
///   {"op":"register","id":N,"topic":T}      -> ack
/// Failures answer {"op":"error","id":N,"code":ERRC,"message":...}.
/// A repeated publish id on one connection is acknowledged but not
/// re-published, so the client's single retry cannot duplicate.
class TcpServer {
 public:
  /// Port 0 picks a free port.
  TcpServer(Broker& broker, std::uint16_t port = 0, std::string bind_host = "127.0.0.1");
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  void stop();

 private:
  struct Connection;
  void accept_loop();
  void serve(std::shared_ptr<Connection> conn);

  Broker& broker_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  std::mutex conns_mu_;
  std::vector<std::shared_ptr<Connection>> conns_;
  std::vector<std::thread> workers_;
};

/// Request/response client. Publishes are acknowledged; a missing ack within
/// the timeout triggers exactly one retry with the same id.
class TcpClient {
 public:
  TcpClient(const std::string& host, std::uint16_t port,
            std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));
  ~TcpClient();
  TcpClient(const TcpClient&) = delete;
  TcpClient& operator=(const TcpClient&) = delete;

  std::uint64_t publish(const Message& m);
  void register_topic(std::string_view topic);
  Message fetch(std::string_view topic);
  int retries() const noexcept { return retries_; }

 private:
  Json request(Json req, bool retry);

  int fd_ = -1;
  std::string buffer_;
  std::chrono::milliseconds timeout_;
  std::uint64_t next_id_ = 1;
  int retries_ = 0;
};

/// A dedicated connection streaming messages for one filter.
class TcpSubscription {
 public:
  TcpSubscription(const std::string& host, std::uint16_t port, std::string_view filter,
                  std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));
  ~TcpSubscription();
  TcpSubscription(const TcpSubscription&) = delete;
  TcpSubscription& operator=(const TcpSubscription&) = delete;

  std::optional<Message> next(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::string buffer_;
};

/// "host:port" -> pair; throws BadConfig.
std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint);

}  // namespace mdf::transport
