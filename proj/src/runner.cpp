#include "mdf/runner.hpp"

#include <algorithm>
#include <sstream>

namespace mdf::runner {

using Json = nlohmann::json;

std::string selection_name(const std::set<PipelineId>& selection) {
  std::string out = "{";
  for (const auto& p : selection) {
    if (out.size() > 1) out += ",";
    out += std::to_string(p.index());
  }
  return out + "}";
}

std::set<PipelineId> parse_selection(std::string_view text) {
  std::string s(text);
  std::erase_if(s, [](char c) { return c == '{' || c == '}' || c == ' '; });
  std::set<PipelineId> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    int idx = 0;
    try {
      std::size_t used = 0;
      idx = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad pipeline index '" + item + "'");
    }
    out.insert(PipelineId(idx));
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, "empty pipeline selection");
  return out;
}

std::vector<edge::PipelineBinding> calibrate_bindings(std::span<const RawFrame> frames,
                                                      std::int64_t calibration_end_ms,
                                                      const std::set<PipelineId>& pipelines, std::size_t window_len) {
  std::vector<RawFrame> empty;
  for (const auto& f : frames) {
    if (f.at().millis() < calibration_end_ms) empty.push_back(f);
  }
  std::vector<edge::PipelineBinding> out;
  for (const auto& p : pipelines) {
    edge::PipelineBinding b{p, edge::calibrate(p, empty), window_len};
    b.validate();
    out.push_back(std::move(b));
  }
  return out;
}

PreparedCapture extract_windows(std::vector<edge::PipelineBinding> bindings, std::span<const RawFrame> frames,
                                const std::vector<simgen::WindowLabel>& labels, std::int64_t calibration_end_ms) {
  PreparedCapture out;
  std::map<PipelineId, edge::MicroEdge> edges;
  for (const auto& b : bindings) edges.emplace(b.pipeline, edge::MicroEdge(b, "offline", [] { return 0.0; }));
  std::map<std::size_t, LabeledWindow> windows;
  for (const auto& f : frames) {
    if (f.at().millis() < calibration_end_ms) continue;
    const auto it = edges.find(f.sensor().pipeline());
    if (it == edges.end()) continue;
    for (const auto& m : it->second.ingest(f)) out.dead_letters += m.kind == transport::Kind::DeadLetter;
    for (auto& w : it->second.take_windows()) {
      auto& lw = windows[w.index];
      lw.index = w.index;
      lw.end = std::max(lw.end, w.window_end);
      lw.matrices.emplace(w.pipeline, std::move(w.matrix));
    }
  }
  std::map<std::int64_t, const simgen::WindowLabel*> by_end;
  for (const auto& l : labels) by_end[l.window_end_ms] = &l;
  for (auto& [idx, w] : windows) {
    if (w.matrices.size() != bindings.size()) continue;
    const auto l = by_end.find(w.end.millis());
    if (l == by_end.end()) continue;
    w.label = *l->second;
    out.windows.push_back(std::move(w));
  }
  out.bindings = std::move(bindings);
  return out;
}

PreparedCapture prepare(const simgen::Scenario& s) {
  const auto frames = simgen::scenario_frames(s);
  std::set<PipelineId> pipelines;
  for (int p : s.pipelines) pipelines.insert(PipelineId(p));
  auto bindings = calibrate_bindings(frames, s.calibration_ms, pipelines, s.window_len);
  return extract_windows(std::move(bindings), frames, simgen::scenario_labels(s), s.calibration_ms);
}

std::vector<std::pair<features::FeatureGrid, std::string>> fused_samples(const PreparedCapture& p,
                                                                         const std::set<PipelineId>& selection) {
  std::vector<std::pair<features::FeatureGrid, std::string>> out;
  out.reserve(p.windows.size());
  for (const auto& w : p.windows) out.emplace_back(features::fuse_features(w.matrices, selection, w.end), w.label.label);
  return out;
}

SelectionScore score_selection(const PreparedCapture& p, const std::set<PipelineId>& selection,
                               const std::vector<std::string>& classes, const cloud::TrainConfig& config,
                               double train_fraction, std::uint64_t split_seed) {
  const auto ds = cloud::make_dataset(fused_samples(p, selection), classes);
  auto [train, test] = cloud::split_dataset(ds, train_fraction, split_seed);
  auto model = cloud::train_classifier(train, config);
  auto eval = cloud::evaluate(model, test);
  return {selection, std::move(eval), std::move(model)};
}

Geometry geometry_of(const simgen::Scenario& s) {
  Geometry g;
  for (const auto& [name, p] : s.landmarks) g.landmarks[name] = {p.x, p.y};
  g.robot = {s.robot.x, s.robot.y};
  return g;
}

Geometry geometry_from_manifest(const Json& manifest) {
  Geometry g;
  try {
    for (const auto& [name, p] : manifest.at("landmarks").items()) {
      g.landmarks[name] = {p.at(0).get<double>(), p.at(1).get<double>()};
    }
    const auto& r = manifest.at("robot");
    g.robot = {r.at(0).get<double>(), r.at(1).get<double>()};
  } catch (const Json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("manifest geometry: ") + e.what());
  }
  return g;
}

LiveResult run_live(const std::vector<transport::Message>& frames, std::vector<edge::PipelineBinding> bindings,
                    HrcFunction function, const std::set<PipelineId>& selection, const cloud::ClassifierModel& model,
                    const Geometry& geometry, const LiveOptions& options) {
  std::set<PipelineId> bound;
  for (const auto& b : bindings) bound.insert(b.pipeline);

  transport::ManualClock edge_time, cloud_time;
  const bool replay = options.processing_delay_ms.has_value();
  const transport::Clock edge_clock = replay ? edge_time.clock() : transport::wall_clock();
  const transport::Clock cloud_clock = replay ? cloud_time.clock() : transport::wall_clock();

  transport::Broker broker;
  edge::EdgeNode node(options.cell, std::move(bindings), {function}, edge_clock);
  cloud::CloudService cloud(options.cell, cloud_clock);
  cloud.set_model(function, model);
  for (const auto& t : node.topics()) broker.register_topic(t);
  for (const auto& t : cloud.topics()) broker.register_topic(t);
  broker.register_topic(transport::Topic::ssm(options.cell).str());
  Json update = {{"function", function_name(function)}, {"pipelines", Json::array()}};
  for (const auto& p : selection) update["pipelines"].push_back(p.index());
  node.stage_update(update);

  const auto frame_sub = broker.subscribe("edge/" + options.cell + "/+/+");
  const auto grid_sub = broker.subscribe(transport::Topic::grid(options.cell, function).str());
  const auto result_sub = broker.subscribe(transport::Topic::result(options.cell, function).str());
  std::optional<safety::SsmMonitor> monitor;
  if (options.d_p) monitor.emplace(options.cell, *options.d_p, options.hysteresis);

  LiveResult out;
  transport::ReplayOptions ro;
  ro.stamp_delay_ms = options.processing_delay_ms.value_or(0.0);
  transport::replay(frames, ro, [&](const transport::Message& msg, double now_ms) {
    if (msg.kind != transport::Kind::Frame) return;
    const auto frame = transport::frame_from_json(msg.payload);
    if (!bound.count(frame.sensor().pipeline())) return;
    auto local = msg;
    local.topic = transport::Topic::sensor(options.cell, frame.sensor()).str();
    broker.register_topic(local.topic);
    broker.publish(local);
    while (auto m = frame_sub->try_pop()) {
      if (m->kind != transport::Kind::Frame) continue;  // our own feature telemetry
      edge_time.set(static_cast<double>(m->t_ms));
      for (const auto& tel : node.ingest(transport::frame_from_json(m->payload))) {
        out.dead_letters += tel.kind == transport::Kind::DeadLetter;
        out.feature_messages += tel.kind == transport::Kind::Features;
        broker.publish(tel);
      }
      for (const auto& fw : node.take_fused()) broker.publish(edge::grid_message(options.cell, fw, m->t_ms));
    }
    cloud_time.set(now_ms);
    while (auto g = grid_sub->try_pop()) broker.publish(cloud.handle(*g));
    while (auto r = result_sub->try_pop()) {
      out.classifications.push_back(*r);
      out.latency_samples.push_back(r->payload.at("latency_ms").get<double>());
      if (monitor) {
        const auto lm = geometry.landmarks.find(r->payload.at("label").get<std::string>());
        if (lm == geometry.landmarks.end()) continue;
        const double d = (lm->second - geometry.robot).norm();
        const auto ssm = monitor->update(Timestamp(r->payload.at("window_end_ms").get<std::int64_t>()), d);
        broker.publish(ssm);
        out.ssm.push_back(ssm);
      }
    }
  });
  out.latency = cloud.latency().stats(function);
  return out;
}

std::vector<std::pair<std::string, std::string>> predicted_vs_truth(const std::vector<transport::Message>& results,
                                                                   const std::vector<simgen::WindowLabel>& labels) {
  std::map<std::int64_t, std::string> truth;
  for (const auto& l : labels) truth[l.window_end_ms] = l.label;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& r : results) {
    const auto it = truth.find(r.payload.at("window_end_ms").get<std::int64_t>());
    if (it != truth.end()) out.emplace_back(r.payload.at("label").get<std::string>(), it->second);
  }
  return out;
}

std::vector<CountingSession> counting_sessions(std::span<const RawFrame> frames, const Json& manifest) {
  if (!manifest.contains("sessions") || !manifest.at("sessions").is_array()) {
    throw Error(Errc::SchemaViolation, "manifest lacks a sessions array");
  }
  std::vector<CountingSession> out;
  try {
    for (const auto& s : manifest.at("sessions")) {
      CountingSession cs;
      cs.start_ms = s.at("start_ms").get<std::int64_t>();
      cs.end_ms = s.at("end_ms").get<std::int64_t>();
      cs.true_count = s.value("true_count", -1);
      cs.calibration = s.value("calibration", false);
      out.push_back(std::move(cs));
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("manifest sessions: ") + e.what());
  }
  for (const auto& f : frames) {
    if (f.sensor().pipeline().kind() != PipelineKind::Csi) continue;
    const auto t = f.at().millis();
    for (auto& cs : out) {
      if (t >= cs.start_ms && t < cs.end_ms) {
        cs.frames.push_back(f);
        break;
      }
    }
  }
  return out;
}

}  // namespace mdf::runner
