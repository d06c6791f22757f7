#include "mdf/transport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mdf/features.hpp"

namespace mdf::transport {

namespace {

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto slash = path.find('/', start);
    out.emplace_back(path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return out;
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty() || s.size() > 6) return false;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

std::optional<HrcFunction> maybe_function(const std::string& s) {
  try {
    return function_from_name(s);
  } catch (const Error&) {
    return std::nullopt;
  }
}

[[noreturn]] void bad_topic(std::string_view path, const char* why) {
  throw Error(Errc::InvalidArgument, "topic '" + std::string(path) + "': " + why);
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(Errc::SchemaViolation, what);
}

bool is_int(const Json& j, const char* key) { return j.contains(key) && j.at(key).is_number_integer(); }
bool is_num(const Json& j, const char* key) { return j.contains(key) && j.at(key).is_number(); }
bool is_str(const Json& j, const char* key) { return j.contains(key) && j.at(key).is_string(); }

}  // namespace

//=============================================================================
// Topics
//=============================================================================

Topic Topic::parse(std::string_view path) {
  Topic t;
  t.path_ = std::string(path);
  t.segments_ = split_path(path);
  for (const auto& s : t.segments_) {
    if (s.empty()) bad_topic(path, "empty segment");
    if (s.find_first_of("+#") != std::string::npos) bad_topic(path, "wildcards are not allowed in topics");
  }
  const auto& seg = t.segments_;
  if (seg[0] == "edge" && seg.size() == 4) {
    int p = 0, k = 0;
    if (!parse_int(seg[2], p) || !parse_int(seg[3], k)) bad_topic(path, "pipeline and sensor must be integers");
    try {
      SensorId(PipelineId(p), k);
    } catch (const Error&) {
      bad_topic(path, "no such pipeline sensor");
    }
    t.class_ = TopicClass::SensorStream;
  } else if (seg[0] == "edge" && seg.size() == 3) {
    if (seg[2] == "errors") {
      t.class_ = TopicClass::EdgeErrors;
    } else if (maybe_function(seg[2])) {
      t.class_ = TopicClass::EdgeGrid;
    } else {
      bad_topic(path, "expected errors or an HRC function");
    }
  } else if (seg[0] == "cloud" && seg.size() == 3) {
    if (seg[2] == "ssm") {
      t.class_ = TopicClass::CloudSsm;
    } else if (seg[2] == "control") {
      t.class_ = TopicClass::CloudControl;
    } else if (maybe_function(seg[2])) {
      t.class_ = TopicClass::CloudResult;
    } else {
      bad_topic(path, "expected ssm, control or an HRC function");
    }
  } else {
    bad_topic(path, "unknown layout");
  }
  return t;
}

Topic Topic::sensor(std::string_view cell, const SensorId& sensor) {
  return parse("edge/" + std::string(cell) + "/" + std::to_string(sensor.pipeline().index()) + "/" +
               std::to_string(sensor.k()));
}
Topic Topic::errors(std::string_view cell) { return parse("edge/" + std::string(cell) + "/errors"); }
Topic Topic::grid(std::string_view cell, HrcFunction f) {
  return parse("edge/" + std::string(cell) + "/" + std::string(function_name(f)));
}
Topic Topic::result(std::string_view cell, HrcFunction f) {
  return parse("cloud/" + std::string(cell) + "/" + std::string(function_name(f)));
}
Topic Topic::ssm(std::string_view cell) { return parse("cloud/" + std::string(cell) + "/ssm"); }
Topic Topic::control(std::string_view cell) { return parse("cloud/" + std::string(cell) + "/control"); }

TopicFilter::TopicFilter(std::string_view filter) : text_(filter) {
  if (filter.empty()) throw Error(Errc::BadFilter, "empty filter");
  segments_ = split_path(filter);
  for (const auto& s : segments_) {
    if (s.empty()) throw Error(Errc::BadFilter, "empty segment in '" + text_ + "'");
    if (s.find('#') != std::string::npos) throw Error(Errc::BadFilter, "multi-level wildcard not supported");
    if (s.find('+') != std::string::npos && s != "+") {
      throw Error(Errc::BadFilter, "'+' must fill a whole segment in '" + text_ + "'");
    }
  }
}

bool TopicFilter::matches(std::string_view topic) const {
  std::size_t start = 0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (start > topic.size()) return false;
    const auto slash = topic.find('/', start);
    const auto end = slash == std::string_view::npos ? topic.size() : slash;
    const auto seg = topic.substr(start, end - start);
    if (segments_[i] != "+" && segments_[i] != seg) return false;
    const bool last = i + 1 == segments_.size();
    if (last) return slash == std::string_view::npos;
    if (slash == std::string_view::npos) return false;
    start = slash + 1;
  }
  return false;
}

//=============================================================================
// Messages
//=============================================================================

std::string_view kind_name(Kind kind) noexcept {
  switch (kind) {
    case Kind::Frame: return "frame";
    case Kind::Features: return "features";
    case Kind::Grid: return "grid";
    case Kind::Classification: return "classification";
    case Kind::DeadLetter: return "dead_letter";
    case Kind::Ssm: return "ssm";
    case Kind::Control: return "control";
  }
  return "frame";
}

Kind kind_from_name(std::string_view name) {
  for (auto k : {Kind::Frame, Kind::Features, Kind::Grid, Kind::Classification, Kind::DeadLetter, Kind::Ssm,
                 Kind::Control}) {
    if (kind_name(k) == name) return k;
  }
  throw Error(Errc::SchemaViolation, "unknown message kind '" + std::string(name) + "'");
}

Json encode(const Message& m) {
  return {{"topic", m.topic}, {"t_ms", m.t_ms}, {"kind", kind_name(m.kind)}, {"payload", m.payload}};
}

std::string encode_line(const Message& m) { return encode(m).dump(); }

Message decode(const Json& doc) {
  require(doc.is_object(), "envelope must be an object");
  require(is_str(doc, "topic"), "envelope.topic must be a string");
  require(is_int(doc, "t_ms"), "envelope.t_ms must be an integer");
  require(is_str(doc, "kind"), "envelope.kind must be a string");
  require(doc.contains("payload"), "envelope.payload missing");
  Message m;
  m.topic = doc.at("topic").get<std::string>();
  m.t_ms = doc.at("t_ms").get<std::int64_t>();
  m.kind = kind_from_name(doc.at("kind").get<std::string>());
  m.payload = doc.at("payload");
  return m;
}

Message decode_line(std::string_view line) {
  Json doc;
  try {
    doc = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::SchemaViolation, std::string("not JSON: ") + e.what());
  }
  return decode(doc);
}

Json frame_to_json(const RawFrame& frame) {
  return {{"pipeline", frame.sensor().pipeline().index()},
          {"sensor", frame.sensor().k()},
          {"t_ms", frame.at().millis()},
          {"values", frame.values()}};
}

RawFrame frame_from_json(const Json& doc) {
  require(is_int(doc, "pipeline") && is_int(doc, "sensor") && is_int(doc, "t_ms"), "frame header fields");
  require(doc.contains("values") && doc.at("values").is_array(), "frame.values must be an array");
  try {
    return RawFrame(SensorId(PipelineId(doc.at("pipeline").get<int>()), doc.at("sensor").get<int>()),
                    Timestamp(doc.at("t_ms").get<std::int64_t>()), doc.at("values").get<std::vector<double>>());
  } catch (const Json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("frame: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, std::string("frame: ") + e.what());
  }
}

void validate_payload(Kind kind, const Json& p) {
  require(p.is_object(), "payload must be an object");
  switch (kind) {
    case Kind::Frame:
      (void)frame_from_json(p);
      return;
    case Kind::Features:
      try {
        (void)features::feature_from_json(p);
      } catch (const Error& e) {
        throw Error(Errc::SchemaViolation, e.what());
      }
      return;
    case Kind::Grid:
      try {
        (void)features::grid_from_json(p);
      } catch (const Error& e) {
        throw Error(Errc::SchemaViolation, e.what());
      }
      require(!p.contains("ingest_ms") || p.at("ingest_ms").is_number(), "grid.ingest_ms must be a number");
      return;
    case Kind::Classification:
      require(is_str(p, "function") && maybe_function(p.at("function").get<std::string>()),
              "classification.function");
      require(is_int(p, "class") && p.at("class").get<std::int64_t>() >= 0, "classification.class");
      require(p.contains("softmax") && p.at("softmax").is_array(), "classification.softmax");
      for (const auto& v : p.at("softmax")) require(v.is_number(), "classification.softmax entries");
      require(is_int(p, "window_end_ms"), "classification.window_end_ms");
      for (const char* key : {"ingest_ms", "classified_ms", "latency_ms"}) {
        require(!p.contains(key) || p.at(key).is_number(), "classification timing fields must be numbers");
      }
      return;
    case Kind::DeadLetter:
      require(is_int(p, "pipeline") && is_int(p, "sensor") && is_int(p, "t_ms"), "dead_letter header fields");
      require(is_str(p, "error") && is_str(p, "message"), "dead_letter.error/message");
      return;
    case Kind::Ssm:
      require(is_int(p, "t_ms") && is_num(p, "d_m") && is_num(p, "d_p_m"), "ssm fields");
      require(is_str(p, "mode"), "ssm.mode");
      {
        const auto mode = p.at("mode").get<std::string>();
        require(mode == "Run" || mode == "Slow" || mode == "ProtectiveStop", "ssm.mode value");
      }
      return;
    case Kind::Control:
      require(is_str(p, "function") && maybe_function(p.at("function").get<std::string>()), "control.function");
      require(p.contains("pipelines") && p.at("pipelines").is_array(), "control.pipelines");
      for (const auto& v : p.at("pipelines")) require(v.is_number_integer(), "control.pipelines entries");
      return;
  }
}

void validate_route(const Topic& topic, Kind kind) {
  bool ok = false;
  switch (topic.topic_class()) {
    case TopicClass::SensorStream: ok = kind == Kind::Frame || kind == Kind::Features; break;
    case TopicClass::EdgeErrors: ok = kind == Kind::DeadLetter; break;
    case TopicClass::EdgeGrid: ok = kind == Kind::Grid; break;
    case TopicClass::CloudResult: ok = kind == Kind::Classification; break;
    case TopicClass::CloudSsm: ok = kind == Kind::Ssm; break;
    case TopicClass::CloudControl: ok = kind == Kind::Control; break;
  }
  if (!ok) {
    throw Error(Errc::SchemaViolation,
                "kind '" + std::string(kind_name(kind)) + "' cannot be published on " + topic.str());
  }
}

//=============================================================================
// Clocks and latency
//=============================================================================

double wall_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(system_clock::now().time_since_epoch()).count();
}

Clock wall_clock() { return [] { return wall_ms(); }; }

double measure_latency(double ingestion_ms, double classified_ms) {
  if (!std::isfinite(ingestion_ms) || !std::isfinite(classified_ms)) {
    throw Error(Errc::NonFinite, "latency endpoints must be finite");
  }
  if (classified_ms < ingestion_ms) {
    throw Error(Errc::ClockSkew, "classified before ingestion");
  }
  return classified_ms - ingestion_ms;
}

double measure_latency(Timestamp ingestion, Timestamp classified) {
  return measure_latency(static_cast<double>(ingestion.millis()), static_cast<double>(classified.millis()));
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

Json to_json(const LatencyStats& s) {
  return {{"count", s.count}, {"mean_ms", s.mean}, {"p50_ms", s.p50}, {"p95_ms", s.p95}, {"max_ms", s.max}};
}

double LatencyRecorder::record(HrcFunction f, double ingestion_ms, double classified_ms) {
  const double ms = measure_latency(ingestion_ms, classified_ms);
  add(f, ms);
  return ms;
}

void LatencyRecorder::add(HrcFunction f, double latency_ms) {
  std::lock_guard lock(mu_);
  samples_[f].push_back(latency_ms);
}

std::vector<double> LatencyRecorder::samples(HrcFunction f) const {
  std::lock_guard lock(mu_);
  const auto it = samples_.find(f);
  return it == samples_.end() ? std::vector<double>{} : it->second;
}

LatencyStats LatencyRecorder::stats(HrcFunction f) const {
  const auto v = samples(f);
  LatencyStats s;
  s.count = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  s.p50 = percentile(v, 0.50);
  s.p95 = percentile(v, 0.95);
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

//=============================================================================
// Broker
//=============================================================================

Subscription::Subscription(TopicFilter filter, std::size_t capacity, Overflow policy)
    : filter_(std::move(filter)), capacity_(std::max<std::size_t>(1, capacity)), policy_(policy) {}

void Subscription::push(const Message& m) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (queue_.size() >= capacity_) {
      ++dropped_;
      if (policy_ == Overflow::DropNewest) return;
      queue_.pop_front();
    }
    queue_.push_back(m);
  }
  cv_.notify_one();
}

std::optional<Message> Subscription::try_pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  auto m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::optional<Message> Subscription::pop_for(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  auto m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::size_t Subscription::size() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

std::uint64_t Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

Broker::Broker(BrokerOptions options) : options_(options) {}

void Broker::register_topic(std::string_view topic) {
  const auto t = Topic::parse(topic);
  std::lock_guard lock(mu_);
  topics_.insert(t.str());
}

bool Broker::registered(std::string_view topic) const {
  std::lock_guard lock(mu_);
  return topics_.find(topic) != topics_.end();
}

std::vector<std::string> Broker::topics() const {
  std::lock_guard lock(mu_);
  return {topics_.begin(), topics_.end()};
}

Ack Broker::publish(const Message& m) {
  if (!registered(m.topic)) throw Error(Errc::UnknownTopic, "topic '" + m.topic + "' is not registered");
  if (options_.validate) {
    validate_route(Topic::parse(m.topic), m.kind);
    validate_payload(m.kind, m.payload);
  }
  std::lock_guard lock(mu_);
  Ack ack{m.topic, ++sequence_, 0};
  retained_.insert_or_assign(m.topic, m);
  for (const auto& sub : subs_) {
    if (sub->filter().matches(m.topic)) {
      sub->push(m);
      ++ack.delivered;
    }
  }
  return ack;
}

std::shared_ptr<Subscription> Broker::subscribe(std::string_view filter) {
  auto sub = std::make_shared<Subscription>(TopicFilter(filter), options_.queue_capacity, options_.overflow);
  std::lock_guard lock(mu_);
  subs_.push_back(sub);
  return sub;
}

void Broker::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  if (!sub) return;
  sub->close();
  std::lock_guard lock(mu_);
  std::erase(subs_, sub);
}

Message Broker::fetch(std::string_view topic) const {
  std::lock_guard lock(mu_);
  const auto it = retained_.find(topic);
  if (it == retained_.end()) throw Error(Errc::NotFound, "no retained message on '" + std::string(topic) + "'");
  return it->second;
}

std::uint64_t Broker::dropped() const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& s : subs_) total += s->dropped();
  return total;
}

std::uint64_t Broker::published() const {
  std::lock_guard lock(mu_);
  return sequence_;
}

//=============================================================================
// Capture and replay
//=============================================================================

struct CaptureWriter::Impl {
  std::ofstream out;
};

CaptureWriter::CaptureWriter(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->out.open(path, std::ios::out | std::ios::trunc);
  if (!impl_->out) throw Error(Errc::Io, "cannot write capture " + path);
}

CaptureWriter::~CaptureWriter() = default;

void CaptureWriter::write(const Message& m) {
  impl_->out << encode_line(m) << '\n';
  if (!impl_->out) throw Error(Errc::Io, "capture write failed");
  ++written_;
}

std::vector<Message> read_capture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "capture not found: " + path);
  std::vector<Message> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(decode_line(line));
    } catch (const Error& e) {
      throw Error(Errc::SchemaViolation, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_capture(const std::string& path, const std::vector<Message>& messages) {
  CaptureWriter w(path);
  for (const auto& m : messages) w.write(m);
}

void replay(const std::vector<Message>& messages, const ReplayOptions& options,
            const std::function<void(const Message&, double now_ms)>& sink) {
  if (messages.empty()) return;
  const auto start = std::chrono::steady_clock::now();
  const auto t0 = messages.front().t_ms;
  for (const auto& m : messages) {
    if (options.speed > 0.0) {
      const auto due = std::chrono::duration<double, std::milli>(static_cast<double>(m.t_ms - t0) / options.speed);
      std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(due));
    }
    sink(m, static_cast<double>(m.t_ms) + options.stamp_delay_ms);
  }
}

}  // namespace mdf::transport
