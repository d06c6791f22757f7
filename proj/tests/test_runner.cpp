#include <algorithm>

#include "mdf/runner.hpp"
#include "test_util.hpp"

using namespace mdf;
using namespace mdf::runner;

namespace {

simgen::Scenario small_motion() {
  simgen::ScenarioOptions o;
  o.windows_per_class = 3;
  o.calibration_windows = 6;
  o.seed = 21;
  return simgen::motion_scenario(o);
}

struct Trained {
  simgen::Scenario scenario;
  PreparedCapture prepared;
  SelectionScore score;
};

const Trained& trained() {
  static const Trained t = [] {
    auto s = small_motion();
    auto p = prepare(s);
    cloud::TrainConfig c;
    c.epochs = 30;
    auto sc = score_selection(p, {PipelineId(1), PipelineId(2)}, s.classes, c, 0.67);
    return Trained{std::move(s), std::move(p), std::move(sc)};
  }();
  return t;
}

}  // namespace

TEST_CASE("selection names") {
  CHECK(selection_name({PipelineId(2), PipelineId(1)}) == "{1,2}");
  CHECK(parse_selection("{1,3}") == std::set<PipelineId>{PipelineId(1), PipelineId(3)});
  CHECK(parse_selection("2") == std::set<PipelineId>{PipelineId(2)});
  CHECK_ERRC(parse_selection("{}"), Errc::InvalidArgument);
  CHECK_ERRC(parse_selection("1,x"), Errc::InvalidArgument);
  CHECK_ERRC(parse_selection("7"), Errc::UnknownPipeline);
}

TEST_CASE("prepared windows carry every pipeline and the scripted label") {
  const auto& t = trained();
  REQUIRE(t.prepared.windows.size() == 8 * 3);
  std::map<std::string, int> per_class;
  for (const auto& w : t.prepared.windows) {
    CHECK(w.matrices.size() == 3);
    CHECK(w.end.millis() == w.label.window_end_ms);
    CHECK(w.end.millis() >= t.scenario.calibration_ms);
    ++per_class[w.label.label];
  }
  for (const auto& c : t.scenario.classes) CHECK(per_class[c] == 3);
  const auto fused = fused_samples(t.prepared, {PipelineId(1), PipelineId(3)});
  CHECK(fused.front().first.channel_count() == 2);
}

TEST_CASE("calibration needs empty frames for every pipeline") {
  const auto s = small_motion();
  const auto frames = simgen::scenario_frames(s);
  CHECK_ERRC(calibrate_bindings(frames, 0, {PipelineId(1)}, 32), Errc::EmptyInput);
}

TEST_CASE("geometry from the manifest matches the scenario") {
  const auto& t = trained();
  const auto cap = simgen::run_scenario(t.scenario);
  const auto a = geometry_of(t.scenario);
  const auto b = geometry_from_manifest(cap.manifest);
  CHECK(a.landmarks.size() == b.landmarks.size());
  for (const auto& [k, v] : a.landmarks) CHECK((b.landmarks.at(k) - v).norm() == 0.0);
  CHECK((a.robot - b.robot).norm() == 0.0);
  CHECK_ERRC(geometry_from_manifest(nlohmann::json::object()), Errc::SchemaViolation);
}

TEST_CASE("live run under a replay clock reports the stamped delay") {
  const auto& t = trained();
  const auto cap = simgen::run_scenario(t.scenario);
  LiveOptions o;
  o.processing_delay_ms = 37.0;
  o.d_p = 0.63;
  const auto r = run_live(cap.messages, t.prepared.bindings, t.scenario.function, {PipelineId(1), PipelineId(2)},
                          t.score.model, geometry_of(t.scenario), o);
  // calibration windows are classified too
  CHECK(r.classifications.size() == cap.labels.size());
  for (double l : r.latency_samples) CHECK(l == doctest::Approx(37.0));
  CHECK(std::abs(r.latency.mean - 37.0) <= 1.0);
  CHECK(r.ssm.size() == r.classifications.size());
  for (const auto& m : r.ssm) CHECK(m.topic == "cloud/c1/ssm");

  // predictions on the offline windows agree with the live path
  const auto pairs = predicted_vs_truth(r.classifications, cap.labels);
  CHECK(pairs.size() == r.classifications.size());
  std::map<std::int64_t, std::string> live;
  for (const auto& m : r.classifications) live[m.payload.at("window_end_ms").get<std::int64_t>()] = m.payload.at("label");
  for (const auto& w : t.prepared.windows) {
    const auto g = features::fuse_features(w.matrices, {PipelineId(1), PipelineId(2)}, w.end);
    CHECK(live.at(w.end.millis()) == t.score.model.class_names[cloud::classify(t.score.model, g).label]);
  }
}

TEST_CASE("live run on the wall clock records positive latency") {
  const auto& t = trained();
  const auto cap = simgen::run_scenario(t.scenario);
  const auto r = run_live(cap.messages, t.prepared.bindings, t.scenario.function, {PipelineId(1), PipelineId(2)},
                          t.score.model, geometry_of(t.scenario), LiveOptions{});
  REQUIRE(!r.latency_samples.empty());
  for (double l : r.latency_samples) CHECK(l > 0.0);
  CHECK(r.ssm.empty());
}

TEST_CASE("counting sessions split by the manifest") {
  const auto s = simgen::counting_scenario(1, 5, 12000);
  const auto cap = simgen::run_scenario(s);
  std::vector<RawFrame> frames;
  for (const auto& m : cap.messages) frames.push_back(transport::frame_from_json(m.payload));
  const auto sessions = counting_sessions(frames, cap.manifest);
  REQUIRE(sessions.size() == s.csi_sessions.size());
  int calibration = 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    CHECK(sessions[i].frames.size() == 240);
    CHECK(sessions[i].true_count == static_cast<int>(s.csi_sessions[i].scene.reflectors.size()));
    calibration += sessions[i].calibration;
  }
  CHECK(calibration == 3);
  CHECK_ERRC(counting_sessions(frames, nlohmann::json::object()), Errc::SchemaViolation);
}
