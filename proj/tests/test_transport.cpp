#include "test_util.hpp"

#include <cstdio>
#include <filesystem>
#include <thread>

#include "mdf/features.hpp"
#include "mdf/transport.hpp"

using namespace mdf;
using namespace mdf::transport;
using namespace std::chrono_literals;

namespace {

Message features_msg(const std::string& topic, std::int64_t t, double mu) {
  const features::FeatureVector fv{SensorId(PipelineId(1), 1), Timestamp(t), mu, 1.0, 0.0, 3.0};
  return {topic, t, Kind::Features, features::to_json(fv)};
}

std::unique_ptr<Broker> broker_with(std::initializer_list<const char*> topics, BrokerOptions options = {}) {
  auto b = std::make_unique<Broker>(options);
  for (auto t : topics) b->register_topic(t);
  return b;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / (std::string("mdf_") + name + "_" +
                                                    std::to_string(::getpid()))).string();
}

}  // namespace

TEST_CASE("topic grammar") {
  CHECK(Topic::parse("edge/c1/1/3").topic_class() == TopicClass::SensorStream);
  CHECK(Topic::parse("edge/c1/errors").topic_class() == TopicClass::EdgeErrors);
  CHECK(Topic::parse("edge/c1/motion").topic_class() == TopicClass::EdgeGrid);
  CHECK(Topic::parse("cloud/c1/copresence").topic_class() == TopicClass::CloudResult);
  CHECK(Topic::parse("cloud/c1/ssm").topic_class() == TopicClass::CloudSsm);
  CHECK(Topic::parse("cloud/c1/control").topic_class() == TopicClass::CloudControl);
  CHECK(Topic::sensor("c1", SensorId(PipelineId(3), 2)).str() == "edge/c1/3/2");
  CHECK_ERRC(Topic::parse("edge/c1/9/1"), Errc::InvalidArgument);
  CHECK_ERRC(Topic::parse("edge/c1/1/7"), Errc::InvalidArgument);
  CHECK_ERRC(Topic::parse("edge//1/1"), Errc::InvalidArgument);
  CHECK_ERRC(Topic::parse("cloud/c1/dance"), Errc::InvalidArgument);
  CHECK_ERRC(Topic::parse("edge/c1/+/1"), Errc::InvalidArgument);
}

TEST_CASE("topic filters") {
  CHECK(TopicFilter("edge/c1/1/+").matches("edge/c1/1/3"));
  CHECK_FALSE(TopicFilter("edge/c1/1/+").matches("edge/c1/2/3"));
  CHECK(TopicFilter("+/+/+/+").matches("edge/c1/2/3"));
  CHECK_FALSE(TopicFilter("+/+/+/+").matches("cloud/c1/ssm"));
  CHECK_FALSE(TopicFilter("edge/c1").matches("edge/c1/errors"));
  CHECK(TopicFilter("cloud/c1/ssm").matches("cloud/c1/ssm"));
  CHECK_ERRC(TopicFilter(""), Errc::BadFilter);
  CHECK_ERRC(TopicFilter("edge//x"), Errc::BadFilter);
  CHECK_ERRC(TopicFilter("edge/c+/1"), Errc::BadFilter);
  CHECK_ERRC(TopicFilter("edge/#"), Errc::BadFilter);
}

TEST_CASE("publish semantics") {
  auto bp = broker_with({"edge/c1/1/1", "edge/c1/2/1"});
  auto& b = *bp;
  SUBCASE("no subscribers still acks") {
    const auto ack = b.publish(features_msg("edge/c1/1/1", 1, 0.0));
    CHECK(ack.delivered == 0);
    CHECK(ack.sequence == 1);
  }
  SUBCASE("fifo per subscriber") {
    auto s = b.subscribe("edge/c1/1/1");
    b.publish(features_msg("edge/c1/1/1", 1, 1.0));
    b.publish(features_msg("edge/c1/1/1", 2, 2.0));
    CHECK(s->try_pop()->t_ms == 1);
    CHECK(s->try_pop()->t_ms == 2);
    CHECK_FALSE(s->try_pop());
  }
  SUBCASE("fan-out gives one copy each") {
    std::vector<std::shared_ptr<Subscription>> subs;
    for (int i = 0; i < 3; ++i) subs.push_back(b.subscribe("edge/c1/+/1"));
    CHECK(b.publish(features_msg("edge/c1/2/1", 5, 0.0)).delivered == 3);
    for (auto& s : subs) {
      CHECK(s->size() == 1);
      CHECK(s->try_pop()->topic == "edge/c1/2/1");
    }
  }
  SUBCASE("errors") {
    CHECK_ERRC(b.publish(features_msg("edge/c1/3/1", 1, 0.0)), Errc::UnknownTopic);
    CHECK_ERRC(b.subscribe("edge/+x"), Errc::BadFilter);
    Message wrong{"edge/c1/1/1", 1, Kind::Ssm, {{"t_ms", 1}, {"d_m", 1.0}, {"d_p_m", 0.5}, {"mode", "Run"}}};
    CHECK_ERRC(b.publish(wrong), Errc::SchemaViolation);
    Message broken{"edge/c1/1/1", 1, Kind::Features, {{"pipeline", 1}}};
    CHECK_ERRC(b.publish(broken), Errc::SchemaViolation);
  }
}

TEST_CASE("retained fetch") {
  auto bp = broker_with({"edge/c1/1/1", "edge/c1/1/2"});
  auto& b = *bp;
  CHECK_ERRC(b.fetch("edge/c1/1/1"), Errc::NotFound);
  b.publish(features_msg("edge/c1/1/1", 1, 1.0));
  b.publish(features_msg("edge/c1/1/1", 2, 2.0));
  CHECK(b.fetch("edge/c1/1/1").t_ms == 2);
  CHECK(b.fetch("edge/c1/1/1") == b.fetch("edge/c1/1/1"));
  CHECK_ERRC(b.fetch("edge/c1/1/2"), Errc::NotFound);
}

TEST_CASE("bounded queues drop oldest and count drops") {
  BrokerOptions opt;
  opt.queue_capacity = 3;
  auto bp = broker_with({"edge/c1/1/1"}, opt);
  auto& b = *bp;
  auto s = b.subscribe("edge/c1/1/1");
  for (int t = 1; t <= 5; ++t) b.publish(features_msg("edge/c1/1/1", t, 0.0));
  CHECK(s->dropped() == 2);
  CHECK(b.dropped() == 2);
  CHECK(s->try_pop()->t_ms == 3);
}

TEST_CASE("latency measurement") {
  CHECK(measure_latency(Timestamp(1000), Timestamp(1037)) == 37.0);
  CHECK(measure_latency(Timestamp(0), Timestamp(0)) == 0.0);
  CHECK_ERRC(measure_latency(Timestamp(5), Timestamp(3)), Errc::ClockSkew);

  LatencyRecorder rec;
  for (int i = 1; i <= 100; ++i) rec.add(HrcFunction::MotionDetection, i);
  const auto s = rec.stats(HrcFunction::MotionDetection);
  CHECK(s.count == 100);
  CHECK(s.mean == doctest::Approx(50.5));
  CHECK(s.p50 == 50.0);
  CHECK(s.p95 == 95.0);
  CHECK(s.max == 100.0);
  CHECK(rec.stats(HrcFunction::CoPresence).count == 0);
  CHECK(rec.record(HrcFunction::CoPresence, 10.25, 10.75) == 0.5);
}

TEST_CASE("serialization round trip over randomized messages") {
  Rng rng(2024);
  const char* cells[] = {"c1", "cellB"};
  for (int i = 0; i < 2000; ++i) {
    Message m;
    m.t_ms = static_cast<std::int64_t>(rng.below(1ULL << 40));
    const auto cell = cells[rng.below(2)];
    switch (rng.below(4)) {
      case 0: {
        const auto p = PipelineId(static_cast<int>(1 + rng.below(4)));
        const SensorId sid(p, static_cast<int>(1 + rng.below(std::min(4, p.max_sensors()))));
        RawFrame f(sid, Timestamp(m.t_ms), testing::normal_vector(rng, p.frame_length(), 0.0, 1e3));
        m = {Topic::sensor(cell, sid).str(), m.t_ms, Kind::Frame, frame_to_json(f)};
        break;
      }
      case 1:
        m.topic = Topic::ssm(cell).str();
        m.kind = Kind::Ssm;
        m.payload = {{"t_ms", m.t_ms}, {"d_m", rng.uniform(0, 5)}, {"d_p_m", rng.normal()}, {"mode", "Slow"}};
        break;
      case 2:
        m.topic = Topic::result(cell, HrcFunction::CoPresence).str();
        m.kind = Kind::Classification;
        m.payload = {{"function", "copresence"},
                     {"class", rng.below(6)},
                     {"softmax", testing::normal_vector(rng, 6)},
                     {"window_end_ms", m.t_ms},
                     {"latency_ms", rng.uniform()}};
        break;
      default:
        m = features_msg(Topic::sensor(cell, SensorId(PipelineId(1), 2)).str(), m.t_ms, rng.normal(0, 1e6));
    }
    validate_payload(m.kind, m.payload);
    const auto line = encode_line(m);
    CHECK(line.find('\n') == std::string::npos);
    REQUIRE(decode_line(line) == m);
  }
  CHECK_ERRC(decode_line("{\"topic\":1}"), Errc::SchemaViolation);
  CHECK_ERRC(decode_line("not json"), Errc::SchemaViolation);
  CHECK_ERRC(decode_line(R"({"topic":"a","t_ms":1,"kind":"bogus","payload":{}})"), Errc::SchemaViolation);
}

TEST_CASE("concurrent publishers keep per-publisher order") {
  auto bp = broker_with({"edge/c1/1/1", "edge/c1/1/2"});
  auto& b = *bp;
  auto sub = b.subscribe("edge/c1/1/+");
  constexpr int kPublishers = 4, kEach = 5000;
  std::vector<std::thread> threads;
  for (int p = 0; p < kPublishers; ++p) {
    threads.emplace_back([&, p] {
      for (int i = 0; i < kEach; ++i) {
        b.publish(features_msg(p % 2 ? "edge/c1/1/2" : "edge/c1/1/1", p * 1000000 + i, p));
      }
    });
  }
  for (auto& t : threads) t.join();
  std::map<std::int64_t, std::int64_t> last;
  int violations = 0, total = 0;
  while (auto m = sub->try_pop()) {
    const auto p = m->t_ms / 1000000;
    if (last.count(p) && m->t_ms <= last[p]) ++violations;
    last[p] = m->t_ms;
    ++total;
  }
  CHECK(total == kPublishers * kEach);
  CHECK(violations == 0);
}

TEST_CASE("capture and replay") {
  const auto path = temp_path("capture.ndjson");
  std::vector<Message> msgs;
  for (int i = 0; i < 5; ++i) msgs.push_back(features_msg("edge/c1/1/1", 1000 + 100 * i, i));
  write_capture(path, msgs);
  const auto back = read_capture(path);
  CHECK(back == msgs);

  std::vector<double> stamps;
  replay(back, {0.0, 37.0}, [&](const Message& m, double now) { stamps.push_back(now - m.t_ms); });
  CHECK(stamps == std::vector<double>(5, 37.0));

  const auto start = std::chrono::steady_clock::now();
  replay(back, {10.0, 0.0}, [](const Message&, double) {});
  CHECK(std::chrono::steady_clock::now() - start >= 39ms);

  CHECK_ERRC(read_capture(path + ".missing"), Errc::MissingFile);
  {
    std::FILE* f = std::fopen(path.c_str(), "a");
    std::fputs("{broken\n", f);
    std::fclose(f);
  }
  CHECK_ERRC(read_capture(path), Errc::SchemaViolation);
  std::filesystem::remove(path);
}

TEST_CASE("tcp binding matches the in-process broker") {
  auto bp = broker_with({"edge/c1/1/1"});
  auto& b = *bp;
  TcpServer server(b);
  TcpClient client("127.0.0.1", server.port());
  client.register_topic("edge/c1/1/2");
  CHECK(b.registered("edge/c1/1/2"));

  auto local = b.subscribe("edge/c1/1/+");
  TcpSubscription remote("127.0.0.1", server.port(), "edge/c1/1/+");

  std::vector<Message> sent;
  for (int i = 0; i < 50; ++i) {
    sent.push_back(features_msg(i % 3 ? "edge/c1/1/1" : "edge/c1/1/2", i, i * 0.5));
    CHECK(client.publish(sent.back()) > 0);
  }
  std::vector<Message> via_tcp, via_local;
  for (std::size_t i = 0; i < sent.size(); ++i) {
    auto m = remote.next(2000ms);
    REQUIRE(m);
    via_tcp.push_back(*m);
    via_local.push_back(*local->try_pop());
  }
  CHECK(via_tcp == sent);
  CHECK(via_local == sent);

  CHECK(client.fetch("edge/c1/1/1") == b.fetch("edge/c1/1/1"));
  CHECK_ERRC(client.fetch("cloud/c1/ssm"), Errc::NotFound);
  CHECK_ERRC(client.publish(features_msg("edge/c1/2/1", 1, 0.0)), Errc::UnknownTopic);
  CHECK_ERRC(TcpSubscription("127.0.0.1", server.port(), "bad//filter"), Errc::BadFilter);
  CHECK(client.retries() == 0);
  server.stop();
}

TEST_CASE("endpoint parsing") {
  CHECK(parse_endpoint("localhost:1883") == std::pair<std::string, std::uint16_t>{"localhost", 1883});
  CHECK_ERRC(parse_endpoint("localhost"), Errc::BadConfig);
  CHECK_ERRC(parse_endpoint("h:99999"), Errc::BadConfig);
}
