#include "mdf/edge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mdf::edge {

using transport::Json;
using transport::Kind;
using transport::Message;
using transport::Topic;

std::set<PipelineId> select_pipelines(HrcFunction f) {
  switch (f) {
    case HrcFunction::WorkerCounting: return {PipelineId(4)};
    case HrcFunction::MotionDetection: return {PipelineId(1), PipelineId(2)};
    case HrcFunction::CoPresence: return {PipelineId(1), PipelineId(2), PipelineId(3)};
  }
  return {};
}

void PipelineBinding::validate() const {
  if (backgrounds.empty()) throw Error(Errc::InvalidArgument, "binding without sensors");
  if (window_len < 2) throw Error(Errc::InvalidArgument, "window_len must be at least 2");
  std::set<int> seen;
  for (const auto& m : backgrounds) {
    if (m.sensor.pipeline() != pipeline) {
      throw Error(Errc::DimensionMismatch, "background model of pipeline " +
                                               std::to_string(m.sensor.pipeline().index()) + " bound to pipeline " +
                                               std::to_string(pipeline.index()));
    }
    if (static_cast<int>(m.params.index()) + 1 != pipeline.index()) {
      throw Error(Errc::DimensionMismatch, "background kind does not match pipeline");
    }
    if (!seen.insert(m.sensor.k()).second) throw Error(Errc::MixedSensors, "sensor bound twice");
  }
}

std::vector<SensorId> PipelineBinding::sensors() const {
  std::vector<SensorId> out;
  for (const auto& m : backgrounds) out.push_back(m.sensor);
  std::sort(out.begin(), out.end());
  return out;
}

//=============================================================================
// MicroEdge
//=============================================================================

MicroEdge::MicroEdge(PipelineBinding binding, std::string cell, transport::Clock clock)
    : binding_(std::move(binding)), cell_(std::move(cell)), clock_(std::move(clock)) {
  binding_.validate();
  for (std::size_t i = 0; i < binding_.backgrounds.size(); ++i) {
    sensors_[binding_.backgrounds[i].sensor.k()].model = i;
  }
}

std::vector<std::string> MicroEdge::topics() const {
  std::vector<std::string> out;
  for (const auto& s : binding_.sensors()) out.push_back(Topic::sensor(cell_, s).str());
  out.push_back(Topic::errors(cell_).str());
  return out;
}

std::size_t MicroEdge::open_window(int k) const {
  const auto it = sensors_.find(k);
  return it == sensors_.end() ? 0 : it->second.completed;
}

Message MicroEdge::dead_letter(const SensorId& sensor, Timestamp at, Errc code, const std::string& what) const {
  return {Topic::errors(cell_).str(), std::llround(clock_()), Kind::DeadLetter,
          Json{{"pipeline", sensor.pipeline().index()},
               {"sensor", sensor.k()},
               {"t_ms", at.millis()},
               {"error", errc_name(code)},
               {"message", what}}};
}

std::vector<Message> MicroEdge::ingest(const RawFrame& frame) {
  std::vector<Message> out;
  const auto& sid = frame.sensor();
  if (sid.pipeline() != binding_.pipeline) {
    out.push_back(dead_letter(sid, frame.at(), Errc::DimensionMismatch, "frame from another pipeline"));
    return out;
  }
  const auto it = sensors_.find(sid.k());
  if (it == sensors_.end()) {
    out.push_back(dead_letter(sid, frame.at(), Errc::MixedSensors, "sensor not bound to this micro-edge"));
    return out;
  }
  auto& st = it->second;
  if (!st.buffer.empty() && frame.at() < st.buffer.back().at()) {
    out.push_back(dead_letter(sid, frame.at(), Errc::NonMonotoneTime, "timestamp decreased"));
    return out;
  }
  try {
    st.buffer.push_back(prep::denoise(frame, binding_.backgrounds[st.model]));
  } catch (const Error& e) {
    out.push_back(dead_letter(sid, frame.at(), e.code(), e.what()));
    return out;
  }
  if (st.buffer.size() < binding_.window_len) return out;

  // The window is complete: scalar telemetry first, then the moment maps.
  const Timestamp end = st.buffer.back().at();
  std::vector<double> summaries;
  summaries.reserve(st.buffer.size());
  for (const auto& d : st.buffer) summaries.push_back(features::frame_summary(d));
  try {
    const auto m = features::compute_moments(summaries);
    const features::FeatureVector fv{sid, end, m.mu, m.sigma, m.zeta, m.kappa};
    out.push_back({Topic::sensor(cell_, sid).str(), std::llround(clock_()), Kind::Features, features::to_json(fv)});
  } catch (const Error& e) {
    out.push_back(dead_letter(sid, end, e.code(), e.what()));
  }

  auto& pending = pending_[st.completed];
  pending.maps[sid.k()] = features::element_moments(st.buffer);
  pending.end = std::max(pending.end, end);
  const auto index = st.completed++;
  st.buffer.clear();

  if (pending.maps.size() == sensors_.size()) {
    std::vector<features::MomentMaps> maps;
    for (auto& [k, m] : pending.maps) maps.push_back(std::move(m));
    ready_.push_back({binding_.pipeline, index, pending.end, clock_(),
                      features::pipeline_feature_matrix(binding_.pipeline, maps)});
    pending_.erase(index);
  }
  return out;
}

std::vector<PipelineWindow> MicroEdge::take_windows() {
  auto out = std::move(ready_);
  ready_.clear();
  return out;
}

std::vector<Message> run_micro_edge(const PipelineBinding& binding, std::span<const RawFrame> frames,
                                    const std::string& cell, transport::Clock clock) {
  MicroEdge edge(binding, cell, std::move(clock));
  std::vector<Message> out;
  for (const auto& f : frames) {
    auto msgs = edge.ingest(f);
    out.insert(out.end(), std::make_move_iterator(msgs.begin()), std::make_move_iterator(msgs.end()));
  }
  return out;
}

//=============================================================================
// Data controller
//=============================================================================

ControllerUpdate parse_update(const Json& doc) {
  if (!doc.is_object() || !doc.contains("function") || !doc.at("function").is_string() ||
      !doc.contains("pipelines") || !doc.at("pipelines").is_array()) {
    throw Error(Errc::SchemaViolation, "controller update needs \"function\" and \"pipelines\"");
  }
  ControllerUpdate u{HrcFunction::WorkerCounting, {}};
  try {
    u.function = function_from_name(doc.at("function").get<std::string>());
  } catch (const Error& e) {
    throw Error(Errc::SchemaViolation, e.what());
  }
  for (const auto& p : doc.at("pipelines")) {
    if (!p.is_number_integer()) throw Error(Errc::SchemaViolation, "pipeline entries must be integers");
    u.pipelines.insert(PipelineId(p.get<int>()));  // UnknownPipeline outside 1..4
  }
  if (u.pipelines.empty()) throw Error(Errc::InvalidArgument, "empty pipeline subset");
  return u;
}

Json to_json(const ControllerUpdate& u) {
  Json pipes = Json::array();
  for (auto p : u.pipelines) pipes.push_back(p.index());
  return {{"function", function_name(u.function)}, {"pipelines", pipes}};
}

Selection default_selection() {
  Selection s;
  for (auto f : {HrcFunction::WorkerCounting, HrcFunction::MotionDetection, HrcFunction::CoPresence}) {
    s[f] = select_pipelines(f);
  }
  return s;
}

Selection apply_controller_update(const Selection& current, const Json& update) {
  const auto u = parse_update(update);
  auto next = current;
  next[u.function] = u.pipelines;
  return next;
}

//=============================================================================
// EdgeNode
//=============================================================================

EdgeNode::EdgeNode(std::string cell, std::vector<PipelineBinding> bindings, std::set<HrcFunction> functions,
                   transport::Clock clock)
    : cell_(std::move(cell)), functions_(std::move(functions)), clock_(std::move(clock)),
      active_(default_selection()) {
  for (auto& b : bindings) {
    const auto p = b.pipeline;
    if (edges_.count(p)) throw Error(Errc::InvalidArgument, "pipeline bound twice");
    edges_.emplace(p, MicroEdge(std::move(b), cell_, clock_));
  }
}

std::vector<std::string> EdgeNode::topics() const {
  std::set<std::string> out;
  for (const auto& [p, e] : edges_) {
    for (auto& t : e.topics()) out.insert(t);
  }
  out.insert(Topic::errors(cell_).str());
  for (auto f : functions_) out.insert(Topic::grid(cell_, f).str());
  return {out.begin(), out.end()};
}

void EdgeNode::stage_update(const Json& update) { staged_.push_back(parse_update(update)); }

std::optional<Selection> EdgeNode::selection_for(std::size_t window) const {
  const auto it = window_selection_.find(window);
  if (it == window_selection_.end()) return std::nullopt;
  return it->second;
}

void EdgeNode::open_windows(std::size_t upto) {
  const std::size_t first = opened_ ? *opened_ + 1 : 0;
  for (std::size_t w = first; w <= upto; ++w) {
    for (const auto& u : staged_) active_[u.function] = u.pipelines;
    staged_.clear();
    window_selection_[w] = active_;
  }
  if (!opened_ || upto > *opened_) opened_ = upto;
}

std::vector<Message> EdgeNode::ingest(const RawFrame& frame) {
  const auto p = frame.sensor().pipeline();
  const auto it = edges_.find(p);
  if (it == edges_.end()) {
    return {{Topic::errors(cell_).str(), std::llround(clock_()), Kind::DeadLetter,
             Json{{"pipeline", p.index()},
                  {"sensor", frame.sensor().k()},
                  {"t_ms", frame.at().millis()},
                  {"error", errc_name(Errc::MissingPipeline)},
                  {"message", "no micro-edge for this pipeline"}}}};
  }
  const auto w = it->second.open_window(frame.sensor().k());
  if (!opened_ || w > *opened_) open_windows(w);
  auto out = it->second.ingest(frame);
  for (auto& pw : it->second.take_windows()) {
    const auto index = pw.index;
    windows_[index].insert_or_assign(p, std::move(pw));
    try_fuse(index);
  }
  return out;
}

void EdgeNode::try_fuse(std::size_t index) {
  // Windows are fused strictly in order; a later window waits for earlier ones.
  while (next_fuse_ <= index) {
    const auto sel_it = window_selection_.find(next_fuse_);
    if (sel_it == window_selection_.end()) return;
    auto& have = windows_[next_fuse_];
    std::vector<HrcFunction> ready;
    for (auto f : functions_) {
      const auto& want = sel_it->second.at(f);
      const bool complete = std::all_of(want.begin(), want.end(), [&](PipelineId q) { return have.count(q) > 0; });
      if (!complete) return;
      ready.push_back(f);
    }
    for (auto f : ready) {
      const auto& want = sel_it->second.at(f);
      std::map<PipelineId, Matrix> mats;
      Timestamp end;
      double ingest = 0.0;
      for (auto q : want) {
        const auto& pw = have.at(q);
        mats.emplace(q, pw.matrix);
        end = std::max(end, pw.window_end);
        ingest = std::max(ingest, pw.ingest_ms);
      }
      fused_.push_back({f, next_fuse_, features::fuse_features(mats, want, end), ingest});
    }
    windows_.erase(next_fuse_);
    window_selection_.erase(next_fuse_);
    ++next_fuse_;
  }
}

std::vector<FusedWindow> EdgeNode::take_fused() {
  auto out = std::move(fused_);
  fused_.clear();
  return out;
}

Message grid_message(const std::string& cell, const FusedWindow& w, std::int64_t t_ms) {
  auto payload = features::to_json(w.grid);
  payload["function"] = function_name(w.function);
  payload["ingest_ms"] = w.ingest_ms;
  payload["window"] = w.index;
  return {Topic::grid(cell, w.function).str(), t_ms, Kind::Grid, std::move(payload)};
}

FusedWindow fused_from_message(const Message& m) {
  if (m.kind != Kind::Grid) throw Error(Errc::SchemaViolation, "expected a grid message");
  transport::validate_payload(Kind::Grid, m.payload);
  FusedWindow w{HrcFunction::MotionDetection, 0, features::grid_from_json(m.payload), 0.0};
  const auto t = Topic::parse(m.topic);
  w.function = function_from_name(m.payload.value("function", t.segments().back()));
  w.ingest_ms = m.payload.value("ingest_ms", 0.0);
  w.index = m.payload.value("window", std::size_t{0});
  return w;
}

//=============================================================================
// Configuration
//=============================================================================

EdgeConfig edge_config_from_json(const Json& doc) {
  try {
    EdgeConfig c;
    c.cell = doc.value("cell", c.cell);
    c.broker = doc.value("broker", c.broker);
    for (const auto& [key, p] : doc.at("pipelines").items()) {
      PipelineId pid(std::stoi(key));
      std::vector<int> ks = p.at("sensors").get<std::vector<int>>();
      for (int k : ks) SensorId(pid, k);
      c.sensors[pid] = ks;
      c.window_len[pid] = p.value("window_len", features::kDefaultWindow);
      if (p.contains("background")) c.background_files[pid] = p.at("background").get<std::string>();
    }
    if (doc.contains("functions")) {
      for (const auto& f : doc.at("functions")) c.functions.insert(function_from_name(f.get<std::string>()));
    } else {
      c.functions = {HrcFunction::MotionDetection, HrcFunction::CoPresence};
    }
    return c;
  } catch (const Json::exception& e) {
    throw Error(Errc::BadConfig, std::string("edge config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(Errc::BadConfig, "edge config: pipeline keys must be integers");
  } catch (const Error& e) {
    throw Error(Errc::BadConfig, std::string("edge config: ") + e.what());
  }
}

Json to_json(const EdgeConfig& c) {
  Json pipes = Json::object();
  for (const auto& [p, ks] : c.sensors) {
    Json entry{{"sensors", ks}};
    if (auto it = c.window_len.find(p); it != c.window_len.end()) entry["window_len"] = it->second;
    if (auto it = c.background_files.find(p); it != c.background_files.end()) entry["background"] = it->second;
    pipes[std::to_string(p.index())] = entry;
  }
  Json fs = Json::array();
  for (auto f : c.functions) fs.push_back(function_name(f));
  return {{"cell", c.cell}, {"broker", c.broker}, {"pipelines", pipes}, {"functions", fs}};
}

Json backgrounds_to_json(const std::vector<prep::BackgroundModel>& models) {
  Json arr = Json::array();
  for (const auto& m : models) arr.push_back(prep::to_json(m));
  return {{"models", arr}};
}

std::vector<prep::BackgroundModel> backgrounds_from_json(const Json& doc) {
  if (!doc.contains("models") || !doc.at("models").is_array()) {
    throw Error(Errc::SchemaViolation, "background file needs a \"models\" array");
  }
  std::vector<prep::BackgroundModel> out;
  for (const auto& m : doc.at("models")) out.push_back(prep::background_from_json(m));
  return out;
}

std::vector<prep::BackgroundModel> calibrate(PipelineId pipeline, std::span<const RawFrame> empty_frames,
                                             double radar_regularization) {
  std::map<int, std::vector<RawFrame>> by_sensor;
  for (const auto& f : empty_frames) {
    if (f.sensor().pipeline() == pipeline) by_sensor[f.sensor().k()].push_back(f);
  }
  if (by_sensor.empty()) throw Error(Errc::EmptyInput, "no calibration frames for the pipeline");
  std::vector<prep::BackgroundModel> out;
  for (const auto& [k, frames] : by_sensor) {
    const SensorId sid(pipeline, k);
    switch (pipeline.kind()) {
      case PipelineKind::Radar: {
        // scale the ridge by the average per-bin variance so short recordings
        // do not blow up the directions they never sampled
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(kRadarBins), sum2 = Eigen::VectorXd::Zero(kRadarBins);
        for (const auto& f : frames) {
          const auto v = f.values();
          const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
          if (x.size() != kRadarBins) throw Error(Errc::DimensionMismatch, "radar frame length");
          sum += x;
          sum2 += x.cwiseProduct(x);
        }
        const double n = static_cast<double>(frames.size());
        const double mean_var = std::max(0.0, ((sum2 / n) - (sum / n).cwiseAbs2()).mean());
        const double lambda = std::max(radar_regularization * mean_var, 1e-12);
        out.push_back({sid, prep::estimate_radar_background(frames, lambda)});
        break;
      }
      case PipelineKind::Thz:
        out.push_back({sid, prep::estimate_thz_background(frames)});
        break;
      case PipelineKind::Ir:
        out.push_back({sid, prep::estimate_ir_background(frames)});
        break;
      case PipelineKind::Csi: {
        auto w = prep::normalize_weights(std::vector<prep::Complex>(kCsiAntennas, prep::Complex(1.0, 0.0)));
        auto los = prep::estimate_los(frames, w);
        out.push_back({sid, prep::CsiCalibration{std::move(w), std::move(los)}});
        break;
      }
    }
  }
  return out;
}

}  // namespace mdf::edge
